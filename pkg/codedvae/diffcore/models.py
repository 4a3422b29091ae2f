import math

import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils import parameters_to_vector, vector_to_parameters

from codedvae.diffcore.config import DTYPE
from codedvae.diffcore.exceptions import NetworkShapeError, NonFiniteError
from codedvae.diffcore.schemas import NetworkPlan


class MultilayerPerceptron(nn.Module):
    """
    Parameter store and evaluator of a fully connected network.

    Weights are drawn uniformly in +-sqrt(6 / (fan_in + fan_out)) from the
    given generator, biases start at zero, everything in double precision.

    Attributes:
        plan: The layer plan.
        layers: One affine map per consecutive pair of sizes.
    """

    def __init__(self, plan: NetworkPlan, generator: torch.Generator | None = None):
        super().__init__()
        self.plan = plan
        self.layers = nn.ModuleList(
            nn.Linear(fan_in, fan_out, dtype=DTYPE)
            for fan_in, fan_out in zip(plan.sizes[:-1], plan.sizes[1:])
        )
        self.reset_parameters(generator)

    @torch.no_grad()
    def reset_parameters(self, generator: torch.Generator | None = None) -> None:
        for layer in self.layers:
            fan_out, fan_in = layer.weight.shape
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            draw = torch.rand(layer.weight.shape, generator=generator, dtype=DTYPE)
            layer.weight.copy_((2.0 * draw - 1.0) * bound)
            layer.bias.zero_()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.plan.in_dim:
            raise NetworkShapeError(
                f"Network expects inputs of size {self.plan.in_dim}, got {x.shape[-1]}"
            )
        last = len(self.layers) - 1
        for index, layer in enumerate(self.layers):
            x = layer(x)
            if index < last:
                x = F.leaky_relu(x, self.plan.negative_slope)
            if not torch.isfinite(x).all():
                raise NonFiniteError(f"Non-finite activation at layer {index}", index)
        if self.plan.output == "logistic":
            x = torch.sigmoid(x)
        return x

    def flat_view(self) -> torch.Tensor:
        return parameters_to_vector(self.parameters())

    def load_flat(self, vector: torch.Tensor) -> None:
        vector_to_parameters(vector, self.parameters())


class GradTape:
    """
    Record of one forward evaluation, consumed by a single backward pass.

    Attributes:
        network: The evaluated network.
        inputs: Leaf copy of the input, gradients are reported for it.
        output: Output of the forward pass.
        consumed: Set once the backward pass ran.
    """

    def __init__(self, network: MultilayerPerceptron, inputs: torch.Tensor, output: torch.Tensor):
        self.network = network
        self.inputs = inputs
        self.output = output
        self.consumed = False
