from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Literal

from pydantic import Field

from codedvae.data_io.schemas import DataConfig
from codedvae.diagnostics.schemas import EvalConfig
from codedvae.models.schemas import ModelSpec
from codedvae.schemas import Base
from codedvae.training.schemas import TrainConfig

Subcommand = Literal["train", "eval", "generate", "reconstruct", "bounds-demo"]


class ExperimentConfig(Base):
    """
    Everything a run depends on, parsed from a key=value file.

    Attributes:
        seed: Seed of initialization, shuffling and noise.
        model: Architecture.
        train: Optimization settings.
        data: Data source.
        eval: Evaluation settings.
    """

    seed: int = 0
    model: ModelSpec = Field(default_factory=ModelSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)


class CliInvocation(Base):
    """
    One parsed command line.

    Attributes:
        subcommand: Command to run.
        config: Experiment configuration file; defaults apply when absent.
        overrides: key=value pairs applied after the file.
        output: Run directory; derived from the command and seed when absent.
        checkpoint: Checkpoint read by eval, generate and reconstruct.
        trials: Generated items for error rates, overriding eval.trials.
        count: Items generated or reconstructed.
        fixed_m1: Bits of m1 held fixed when generating from hierarchical models.
        info_len: Message bits of the bounds-demo toy.
        samples: Draws of z per message in bounds-demo.
        families: Random variational families in bounds-demo.
    """

    subcommand: Subcommand
    config: Path | None = None
    overrides: list[str] = Field(default_factory=list)
    output: Path | None = None
    checkpoint: Path | None = None
    trials: int | None = None
    count: int = 64
    fixed_m1: str | None = None
    info_len: int = 3
    samples: int = 10_000
    families: int = 50


class Manifest(Base):
    """
    Provenance written to manifest.json in every run directory.

    Attributes:
        command: Subcommand that produced the run.
        config: Snapshot of the effective configuration.
        seed: Effective seed after the environment override.
        arguments: Command options of the run, such as checkpoint or count.
        version: Package version.
        created: UTC start time.
        status: running, completed or failed.
        artifacts: Files written, relative to the run directory.
    """

    command: Subcommand
    config: dict[str, Any]
    seed: int
    arguments: dict[str, Any] = Field(default_factory=dict)
    version: str
    created: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    status: Literal["running", "completed", "failed"] = "running"
    artifacts: list[str] = Field(default_factory=list)


class PosteriorDump(Base):
    """Message posteriors of reconstructed items, one row per item."""

    probs: list[list[float]]
