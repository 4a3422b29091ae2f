from typing import Literal

import torch
from pydantic import Field, PositiveFloat, PositiveInt, field_validator, model_validator

from codedvae.coding.config import PROB_EPS
from codedvae.coding.schemas import SoftWord
from codedvae.models.config import DEFAULT_HIDDEN, DEFAULT_NU
from codedvae.schemas import Base, TensorRecord
from codedvae.smoothing.config import DEFAULT_BETA

ModelKind = Literal["uncoded", "coded", "hierarchical", "word"]


class PriorSpec(Base):
    """Factorized Bernoulli prior with a shared bit probability."""

    nu: float = Field(default=DEFAULT_NU, gt=0.0, lt=1.0)

    @field_validator("nu")
    @classmethod
    def clamp(cls, value: float) -> float:
        return min(max(value, PROB_EPS), 1.0 - PROB_EPS)

    def as_soft_word(self, length: int) -> SoftWord:
        return SoftWord.uniform(length, self.nu)


class LikelihoodSpec(Base):
    """Per-pixel Bernoulli cross-entropy on intensities in [0, 1]."""

    kind: Literal["bernoulli"] = "bernoulli"


class ModelSpec(Base):
    """
    Architecture of a model, stored in checkpoints and experiment configs.

    Attributes:
        kind: Model family.
        info_len: Information bits M (per branch for hierarchical models).
        repeat: Copies per bit L (branch 1 for hierarchical models).
        repeat2: Copies per bit of branch 2; defaults to repeat.
        codebook: Codebook of the codeword-level model.
        code_len: Word length of a random codebook.
        codebook_seed: Seed of a random codebook.
        data_dim: Flattened item size.
        encoder_hidden: Hidden widths of the encoder.
        decoder_hidden: Hidden widths of the decoder.
        beta: Smoothing inverse temperature.
        nu: Prior bit probability.
    """

    kind: ModelKind = "coded"
    info_len: PositiveInt = 5
    repeat: PositiveInt = 1
    repeat2: PositiveInt | None = None
    codebook: Literal["repetition", "random"] = "repetition"
    code_len: PositiveInt | None = None
    codebook_seed: int = 0
    data_dim: PositiveInt = 196
    encoder_hidden: list[PositiveInt] = Field(default=[DEFAULT_HIDDEN], min_length=1)
    decoder_hidden: list[PositiveInt] = Field(default=[DEFAULT_HIDDEN], min_length=1)
    beta: PositiveFloat = DEFAULT_BETA
    nu: float = Field(default=DEFAULT_NU, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def check_kind(self) -> "ModelSpec":
        if self.kind == "uncoded" and self.repeat != 1:
            raise ValueError("Uncoded models take no repetition")
        if self.kind == "word" and self.codebook == "random" and self.code_len is None:
            raise ValueError("Random codebooks need model.code_len")
        return self

    @property
    def branch2_repeat(self) -> int:
        return self.repeat2 if self.repeat2 is not None else self.repeat


class Posterior(TensorRecord):
    """
    Factorized posterior of one batch.

    Attributes:
        q_m: Message-bit probabilities (both branches concatenated when hierarchical).
        q_c: Probabilities the latent z is sampled from.
        branches: Message posteriors entering the KL, one per branch.
    """

    q_m: SoftWord
    q_c: SoftWord
    branches: list[SoftWord]


class ElboTerms(TensorRecord):
    """
    Per-item ELBO and its parts, in nats.

    Attributes:
        value: recon - kl.
        recon: log p(x|z) at the sampled z.
        kl1: KL over the message bits, branch 1 of a hierarchical model.
        kl2: KL of the second branch of a hierarchical model.
    """

    value: torch.Tensor
    recon: torch.Tensor
    kl1: torch.Tensor
    kl2: torch.Tensor | None = None

    @property
    def kl(self) -> torch.Tensor:
        return self.kl1 if self.kl2 is None else self.kl1 + self.kl2
