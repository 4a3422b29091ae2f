import math
from typing import Literal

from pydantic import Field, NonNegativeFloat, PositiveInt, field_validator

from codedvae.codeword_vi.config import DEFAULT_SAMPLES
from codedvae.schemas import Base
from codedvae.training.config import DEFAULT_BATCH_SIZE, DEFAULT_LEARNING_RATE


class TrainConfig(Base):
    """
    Optimization settings.

    Attributes:
        epochs: Passes over the training data.
        batch_size: Items per step.
        learning_rate: Adam step size; 0 leaves parameters unchanged.
        objective: Single-sample ELBO or the importance-weighted bound.
        iwae_k: Importance samples of the iwae objective.
        samples: Codeword draws per item for codeword-level models.
        baseline: Leave-one-out baseline for codeword-level models.
        patience: Epochs without held-out improvement before stopping; None disables.
        checkpoint: Checkpoint file name inside the run directory.
        runlog: Run log file name inside the run directory.
    """

    epochs: PositiveInt = 30
    batch_size: PositiveInt = DEFAULT_BATCH_SIZE
    learning_rate: NonNegativeFloat = DEFAULT_LEARNING_RATE
    objective: Literal["elbo", "iwae"] = "elbo"
    iwae_k: PositiveInt = 5
    samples: PositiveInt = DEFAULT_SAMPLES
    baseline: bool = True
    patience: PositiveInt | None = None
    checkpoint: str = "checkpoint.pt"
    runlog: str = "runlog.csv"


class RunLogRow(Base):
    """Per-epoch training averages, in nats per item."""

    epoch: PositiveInt
    elbo: float
    recon: float
    kl: float
    kl2: float | None = None
    grad_norm: float
    seconds: float
    heldout_elbo: float | None = None

    @field_validator("elbo", "recon", "kl", "grad_norm")
    @classmethod
    def check_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("Run log values must be finite")
        return value


class RunLog(Base):
    rows: list[RunLogRow] = Field(default_factory=list)
    stopped_early: bool = False

    def append(self, row: RunLogRow) -> None:
        if self.rows and row.epoch <= self.rows[-1].epoch:
            raise ValueError("Run log epochs must increase")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)
