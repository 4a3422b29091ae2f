import math

import torch
from pydantic import PositiveFloat, computed_field, field_validator

from codedvae.schemas import Base, TensorRecord
from codedvae.smoothing.config import DEFAULT_BETA


class SmoothingParams(Base):
    """
    Truncated-exponential smoothing p(z|1) = e^{beta(z-1)}/Z, p(z|0) = e^{-beta z}/Z.

    Attributes:
        beta: Inverse temperature, fixed per model.
    """

    beta: PositiveFloat = DEFAULT_BETA

    @computed_field
    @property
    def z_norm(self) -> float:
        return -math.expm1(-self.beta) / self.beta

    @property
    def tail(self) -> float:
        # e^{-beta}
        return math.exp(-self.beta)

    @property
    def span(self) -> float:
        # 1 - e^{-beta}
        return -math.expm1(-self.beta)


class NoiseDraw(TensorRecord):
    """
    Uniform draws feeding the inverse CDFs.

    Attributes:
        rho: Uniforms in the open unit interval.
        seed: Seed of the generator the draws came from, when known.
    """

    rho: torch.Tensor
    seed: int | None = None

    @field_validator("rho")
    @classmethod
    def check_open_interval(cls, value: torch.Tensor) -> torch.Tensor:
        if torch.any(value <= 0.0) or torch.any(value >= 1.0):
            raise ValueError("Noise draws must lie strictly inside (0, 1)")
        return value

    def __len__(self) -> int:
        return self.rho.shape[-1]
