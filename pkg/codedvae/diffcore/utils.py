import logging

from torch import nn

from codedvae.diffcore.exceptions import NetworkShapeError
from codedvae.diffcore.schemas import NetworkPlan

logger = logging.getLogger(__name__)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def match_hidden_width(plan: NetworkPlan, layer: int, target: int) -> NetworkPlan:
    """
    Resize one hidden layer so the plan holds as close to target parameters
    as possible without exceeding it.

    Used to equalize coded and uncoded models: the coded encoder's last layer
    and decoder's first layer grow with the code length, the adjacent hidden
    width shrinks to compensate.

    Args:
        plan: Plan to adjust.
        layer: Index into plan.sizes of the hidden layer to resize.
        target: Parameter budget.
    Returns:
        A new plan with only sizes[layer] changed.
    """
    if not 0 < layer < len(plan.sizes) - 1:
        raise NetworkShapeError(f"Layer {layer} is not a hidden layer")
    before, after = plan.sizes[layer - 1], plan.sizes[layer + 1]
    # each unit of width costs its fan-in weights, its bias and its fan-out weights
    per_unit = before + 1 + after
    unit = plan.model_copy(update={"sizes": [*plan.sizes[:layer], 1, *plan.sizes[layer + 1 :]]})
    fixed = unit.parameter_count() - per_unit
    width = (target - fixed) // per_unit
    if width < 1:
        raise NetworkShapeError(f"Budget {target} too small for layer {layer}")
    logger.debug(f"Hidden layer {layer} resized from {plan.sizes[layer]} to {width}")
    return plan.model_copy(
        update={"sizes": [*plan.sizes[:layer], width, *plan.sizes[layer + 1 :]]}
    )
