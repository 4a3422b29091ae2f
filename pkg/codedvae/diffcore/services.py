import logging
from collections.abc import Callable, Mapping, Sequence

import numpy as np
import torch
from torch import nn

from codedvae.diffcore.exceptions import NetworkShapeError, NonFiniteError, TapeConsumedError
from codedvae.diffcore.models import GradTape, MultilayerPerceptron
from codedvae.diffcore.schemas import FiniteDiffReport, NetworkPlan

logger = logging.getLogger(__name__)

GradientBuffer = dict[str, torch.Tensor]


def forward_mlp(
    plan: NetworkPlan, params: MultilayerPerceptron, x: torch.Tensor
) -> tuple[torch.Tensor, GradTape]:
    """
    Evaluate a network and keep what the backward pass needs.

    Args:
        plan: Expected layer plan.
        params: Network holding the parameters.
        x: Input vector or batch.
    Returns:
        The output and its tape.
    """
    if params.plan != plan:
        raise NetworkShapeError("Parameters were built for a different plan")
    inputs = x.detach().clone().requires_grad_(True)
    output = params(inputs)
    return output, GradTape(params, inputs, output)


def backward(tape: GradTape, seed: torch.Tensor) -> GradientBuffer:
    """
    Reverse accumulation through a recorded forward pass.

    Args:
        tape: Unconsumed tape.
        seed: Gradient of the loss with respect to the tape's output.
    Returns:
        Gradients keyed by parameter name, plus "input".
    """
    if tape.consumed:
        raise TapeConsumedError("Tape already consumed by a backward pass")
    tape.consumed = True
    names, tensors = zip(*tape.network.named_parameters())
    grads = torch.autograd.grad(
        tape.output, [*tensors, tape.inputs], grad_outputs=seed, allow_unused=True
    )
    buffer: GradientBuffer = {}
    for name, tensor, grad in zip([*names, "input"], [*tensors, tape.inputs], grads):
        buffer[name] = torch.zeros_like(tensor) if grad is None else grad
    return buffer


def _named(params: nn.Module | Mapping[str, torch.Tensor] | Sequence[torch.Tensor]):
    if isinstance(params, nn.Module):
        return list(params.named_parameters())
    if isinstance(params, Mapping):
        return list(params.items())
    return [(str(i), p) for i, p in enumerate(params)]


def _evaluate(loss_fn: Callable[[], torch.Tensor]) -> float:
    value = float(loss_fn())
    if not np.isfinite(value):
        logger.error("Non-finite loss during finite-difference sweep", exc_info=False)
        raise NonFiniteError("Loss is not finite")
    return value


def finite_diff_check(
    loss_fn: Callable[[], torch.Tensor],
    params: nn.Module | Mapping[str, torch.Tensor] | Sequence[torch.Tensor],
    h: float = 1e-5,
    tol: float = 1e-6,
    analytic: Sequence[torch.Tensor] | None = None,
    max_entries: int | None = None,
    abs_floor: float = 0.0,
    seed: int = 0,
) -> FiniteDiffReport:
    """
    Compare reverse-mode gradients against central differences.

    The relative error of an entry is
    |g_ad - g_fd| / max(1e-12, |g_ad| + |g_fd|).

    Args:
        loss_fn: Deterministic scalar loss (noise fixed inside).
        params: Tensors the gradient is taken with respect to.
        h: Step of the central difference.
        tol: Pass threshold on the largest relative error.
        analytic: Gradients to verify instead of autograd's.
        max_entries: Check a seeded random subset of this many entries per tensor.
        abs_floor: Skip entries where |g_ad| + |g_fd| is below this value.
        seed: Seed of the subset selection.
    Returns:
        The report.
    """
    named = _named(params)
    loss = loss_fn()
    if not torch.isfinite(loss):
        raise NonFiniteError("Loss is not finite")
    if analytic is None:
        analytic = torch.autograd.grad(
            loss, [p for _, p in named], allow_unused=True
        )
    rng = np.random.default_rng(seed)
    per_param: dict[str, float] = {}
    checked = skipped = 0
    for (name, tensor), grad in zip(named, analytic):
        grad = torch.zeros_like(tensor) if grad is None else grad.detach()
        flat = tensor.data.view(-1)
        indices = np.arange(flat.numel())
        if max_entries is not None and flat.numel() > max_entries:
            indices = rng.choice(flat.numel(), size=max_entries, replace=False)
        worst = 0.0
        for index in indices:
            original = flat[index].item()
            flat[index] = original + h
            upper = _evaluate(loss_fn)
            flat[index] = original - h
            lower = _evaluate(loss_fn)
            flat[index] = original
            numeric = (upper - lower) / (2.0 * h)
            exact = grad.view(-1)[index].item()
            scale = abs(exact) + abs(numeric)
            if scale < abs_floor:
                skipped += 1
                continue
            worst = max(worst, abs(exact - numeric) / max(1e-12, scale))
            checked += 1
        per_param[name] = worst
    max_rel_error = max(per_param.values(), default=0.0)
    logger.debug(f"Finite-difference check: max relative error {max_rel_error:.3e}")
    return FiniteDiffReport(
        max_rel_error=max_rel_error,
        per_param=per_param,
        checked=checked,
        skipped=skipped,
        tol=tol,
        passed=max_rel_error < tol,
    )
