import torch
from pydantic import field_validator, model_validator

from codedvae.coding.schemas import Codebook
from codedvae.schemas import TensorRecord


class CategoricalPosterior(TensorRecord):
    """
    Categorical posterior over the words of a codebook.

    Attributes:
        log_weights: Normalized log-probabilities, shape (..., K).
        log_norm: log W, the log normalizer of the unnormalized weights.
        book: Codebook the weights index.
    """

    log_weights: torch.Tensor
    log_norm: torch.Tensor
    book: Codebook

    @field_validator("log_weights")
    @classmethod
    def check_finite(cls, value: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(value).all():
            raise ValueError("Codeword log-weights must be finite")
        return value

    @model_validator(mode="after")
    def check_book(self) -> "CategoricalPosterior":
        if self.log_weights.shape[-1] != len(self.book):
            raise ValueError("One log-weight per codeword is required")
        return self

    @property
    def weights(self) -> torch.Tensor:
        return self.log_weights.exp()

    def __len__(self) -> int:
        return len(self.book)
