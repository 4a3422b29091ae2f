from collections.abc import Sequence

import torch
from pydantic import PositiveInt, computed_field, field_validator, model_validator

from codedvae.coding.config import MAX_CODEBOOK_BITS, PROB_EPS
from codedvae.diffcore.config import DTYPE
from codedvae.schemas import Base, TensorRecord


class CodeSpec(Base):
    """
    (M, L, D) repetition code. Row k of the implied generator matrix has ones
    at columns L(k-1)+1 ... Lk; the matrix itself is never built.

    Attributes:
        info_len: Number of information bits M.
        repeat: Copies per information bit L.
    """

    info_len: PositiveInt
    repeat: PositiveInt = 1

    @computed_field
    @property
    def code_len(self) -> int:
        return self.info_len * self.repeat

    @computed_field
    @property
    def rate(self) -> float:
        return 1.0 / self.repeat


class BitWord(TensorRecord):
    """
    Hard bit vector(s); the last dimension holds the bits, leading
    dimensions are batch dimensions.
    """

    bits: torch.Tensor

    @field_validator("bits", mode="before")
    @classmethod
    def as_tensor(cls, value: torch.Tensor | Sequence[int]) -> torch.Tensor:
        tensor = torch.as_tensor(value)
        if tensor.dim() == 0 or tensor.shape[-1] == 0:
            raise ValueError("BitWord needs at least one bit")
        if not torch.all((tensor == 0) | (tensor == 1)):
            raise ValueError("BitWord entries must be 0 or 1")
        return tensor.to(torch.long)

    def __len__(self) -> int:
        return self.bits.shape[-1]

    def as_probs(self) -> "SoftWord":
        return SoftWord(probs=self.bits.to(DTYPE))

    def tolist(self) -> list:
        return self.bits.tolist()


class SoftWord(TensorRecord):
    """
    Per-bit probabilities q(b=1), clamped to [eps, 1-eps] on construction.
    Gradients flow through the stored tensor.
    """

    probs: torch.Tensor

    @field_validator("probs", mode="before")
    @classmethod
    def clamp(cls, value: torch.Tensor | Sequence[float]) -> torch.Tensor:
        tensor = value if isinstance(value, torch.Tensor) else torch.tensor(value)
        if not tensor.is_floating_point():
            tensor = tensor.to(DTYPE)
        if tensor.dim() == 0 or tensor.shape[-1] == 0:
            raise ValueError("SoftWord needs at least one position")
        return tensor.clamp(PROB_EPS, 1.0 - PROB_EPS)

    @classmethod
    def uniform(cls, length: int, value: float = 0.5) -> "SoftWord":
        return cls(probs=torch.full((length,), value, dtype=DTYPE))

    @property
    def log_p1(self) -> torch.Tensor:
        return torch.log(self.probs)

    @property
    def log_p0(self) -> torch.Tensor:
        return torch.log1p(-self.probs)

    def __len__(self) -> int:
        return self.probs.shape[-1]

    def split(self, sizes: Sequence[int]) -> list["SoftWord"]:
        return [SoftWord(probs=part) for part in self.probs.split(list(sizes), dim=-1)]

    @classmethod
    def concat(cls, words: Sequence["SoftWord"]) -> "SoftWord":
        return cls(probs=torch.cat([w.probs for w in words], dim=-1))


class Codebook(TensorRecord):
    """
    Explicit table of distinct D-bit codewords indexed 0 .. K-1.

    Attributes:
        words: (K, D) tensor of bits.
        index_len: Information bits M the codebook indexes.
        exhaustive: True when built from every message of a CodeSpec.
    """

    words: torch.Tensor
    index_len: PositiveInt
    exhaustive: bool = False

    @field_validator("words", mode="before")
    @classmethod
    def as_tensor(cls, value: torch.Tensor | Sequence[Sequence[int]]) -> torch.Tensor:
        tensor = torch.as_tensor(value).to(torch.long)
        if tensor.dim() != 2:
            raise ValueError("Codebook words must form a (K, D) table")
        if not torch.all((tensor == 0) | (tensor == 1)):
            raise ValueError("Codebook entries must be 0 or 1")
        if tensor.shape[0] and torch.unique(tensor, dim=0).shape[0] != tensor.shape[0]:
            raise ValueError("Codebook words must be distinct")
        return tensor

    @model_validator(mode="after")
    def check_capacity(self) -> "Codebook":
        if self.exhaustive and self.index_len > MAX_CODEBOOK_BITS:
            raise ValueError(
                f"Exhaustive codebooks support at most {MAX_CODEBOOK_BITS} bits"
            )
        return self

    @property
    def code_len(self) -> int:
        return self.words.shape[1]

    def __len__(self) -> int:
        return self.words.shape[0]

    def word(self, index: int) -> BitWord:
        return BitWord(bits=self.words[index])
