import math

import torch
from pydantic import (
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveInt,
    computed_field,
    field_validator,
)

from codedvae.diagnostics.config import DEFAULT_LL_SAMPLES, DEFAULT_TRIALS, TRIAL_CHUNK
from codedvae.schemas import Base, TensorRecord
from codedvae.training.config import DEFAULT_BATCH_SIZE


class ErrorReport(Base):
    """
    Message recovery rates over generated trials.

    Attributes:
        ber_sampled: Bit error rate of one posterior draw per trial.
        ber_map: Bit error rate of the componentwise MAP estimate.
        wer_sampled: Word error rate of one posterior draw per trial.
        wer_map: Word error rate of the MAP estimate.
        trials: Number of generated items.
        branches: Per-branch reports of hierarchical models, keyed m1 and m2.
    """

    ber_sampled: float = Field(ge=0.0, le=1.0)
    ber_map: float = Field(ge=0.0, le=1.0)
    wer_sampled: float = Field(ge=0.0, le=1.0)
    wer_map: float = Field(ge=0.0, le=1.0)
    trials: PositiveInt
    branches: dict[str, "ErrorReport"] | None = None


class ChannelReport(Base):
    """MAP decoding of a repetition code over a binary symmetric channel."""

    repeat: PositiveInt
    info_len: PositiveInt
    flip_prob: float = Field(ge=0.0, le=1.0)
    trials: PositiveInt
    ber: float = Field(ge=0.0, le=1.0)
    wer: float = Field(ge=0.0, le=1.0)
    expected_ber: float = Field(ge=0.0, le=1.0)
    expected_wer: float = Field(ge=0.0, le=1.0)


class GapEstimate(Base):
    """
    Accuracy gap between Bayes decisions and variational decisions.

    Attributes:
        acc_true: Accuracy of the MAP rule under the enumerated posterior.
        acc_var: Accuracy of the MAP rule under the variational posterior.
        delta: acc_true - acc_var.
        kl_hat: Mean KL(q(m|x) || p(m|x)) over generated items.
        bound: sqrt(1 - exp(-2 kl_hat)).
        slack: Allowed Monte-Carlo excess of delta over the bound.
        violated: delta exceeds the bound by more than the slack.
        family: Name of the variational family.
    """

    acc_true: float = Field(ge=0.0, le=1.0)
    acc_var: float = Field(ge=0.0, le=1.0)
    delta: float
    kl_hat: NonNegativeFloat
    bound: float = Field(ge=0.0, le=1.0)
    slack: NonNegativeFloat
    violated: bool
    family: str = "variational"


class GapSweep(Base):
    estimates: list[GapEstimate] = Field(default_factory=list)
    info_len: PositiveInt
    mc_samples: PositiveInt
    n_items: PositiveInt

    @computed_field
    @property
    def violations(self) -> int:
        return sum(e.violated for e in self.estimates)


class ImportanceEstimate(TensorRecord):
    """
    Importance-sampled log-likelihood per item.

    Attributes:
        ll: log(1/S sum_i w_i).
        ess: Effective sample size (sum w)^2 / sum w^2.
    """

    ll: torch.Tensor
    ess: torch.Tensor


class MetricReport(Base):
    """
    Evaluation summary of one model on one dataset.

    Infinite PSNR (perfect reconstruction) is written as Infinity.
    """

    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")

    ber: float
    ber_map: float
    wer: float
    wer_map: float
    psnr_mean: float
    entropy_mean: NonNegativeFloat
    ll_mean: float
    ess_mean: NonNegativeFloat

    @field_validator("psnr_mean")
    @classmethod
    def check_psnr(cls, value: float) -> float:
        # +inf is a perfect reconstruction
        if math.isnan(value) or value == -math.inf:
            raise ValueError("PSNR summary must be a number or +inf")
        return value

    @field_validator("ll_mean", "entropy_mean", "ess_mean")
    @classmethod
    def check_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("Likelihood, entropy and ESS summaries must be finite")
        return value


class EvalConfig(Base):
    """
    Evaluation settings.

    Attributes:
        trials: Generated items for BER/WER.
        ll_samples: Importance samples per item.
        batch_size: Items per evaluation batch.
        trial_chunk: Generated items per BER/WER chunk.
        n_items: Test items evaluated; None uses every item.
    """

    trials: PositiveInt = DEFAULT_TRIALS
    ll_samples: PositiveInt = DEFAULT_LL_SAMPLES
    batch_size: PositiveInt = DEFAULT_BATCH_SIZE
    trial_chunk: PositiveInt = TRIAL_CHUNK
    n_items: PositiveInt | None = None
