from typing import Any, Literal

from pydantic import Field, PositiveInt, model_validator

from codedvae.diffcore.config import CHECKPOINT_FORMAT, CHECKPOINT_VERSION, LEAKY_SLOPE
from codedvae.schemas import Base


class NetworkPlan(Base):
    """
    Layer plan of a multilayer perceptron.

    Attributes:
        sizes: [in, h1, ..., out]; at least one hidden layer.
        negative_slope: Slope of the leaky rectifier on hidden layers.
        output: Output activation, logistic for probabilities.
    """

    sizes: list[PositiveInt] = Field(min_length=3)
    negative_slope: float = LEAKY_SLOPE
    output: Literal["logistic", "identity"] = "identity"

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def parameter_count(self) -> int:
        return sum(a * b + b for a, b in zip(self.sizes[:-1], self.sizes[1:]))


class FiniteDiffReport(Base):
    """
    Outcome of a central finite-difference gradient check.

    Attributes:
        max_rel_error: Largest relative error over checked entries.
        per_param: Largest relative error per parameter name.
        checked: Number of entries compared.
        skipped: Entries below the absolute floor.
        passed: Whether max_rel_error < tol.
    """

    max_rel_error: float
    per_param: dict[str, float]
    checked: int
    skipped: int = 0
    tol: float
    passed: bool


class CheckpointHeader(Base):
    format: str = CHECKPOINT_FORMAT
    version: int = CHECKPOINT_VERSION
    architecture: dict[str, Any]
    seed: int

    @model_validator(mode="after")
    def check_format(self) -> "CheckpointHeader":
        if self.format != CHECKPOINT_FORMAT:
            raise ValueError(f"Unknown checkpoint format {self.format!r}")
        if self.version > CHECKPOINT_VERSION:
            raise ValueError(f"Unsupported checkpoint version {self.version}")
        return self
