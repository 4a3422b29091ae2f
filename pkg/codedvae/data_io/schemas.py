import hashlib
from typing import Literal

import torch
from pydantic import (
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    field_validator,
    model_validator,
)

from codedvae.diffcore.config import DTYPE
from codedvae.schemas import Base, TensorRecord
from codedvae.smoothing.config import DEFAULT_BETA


class SyntheticSpec(Base):
    """
    Generating process of a synthetic dataset with known messages.

    Attributes:
        info_len: Message bits M.
        repeat: Copies per bit L of the generating code.
        beta: Smoothing of the generating latents.
        hidden: Hidden width of the fixed random decoder.
        contrast: Gain applied to the decoder logits.
        noise_scale: Standard deviation of additive Gaussian observation noise.
        n_items: Number of items N.
        height: Image height.
        width: Image width.
        seed: Seed of the decoder, the messages and the noise.
    """

    info_len: PositiveInt = 5
    repeat: PositiveInt = 4
    beta: PositiveFloat = DEFAULT_BETA
    hidden: PositiveInt = 64
    contrast: PositiveFloat = 4.0
    noise_scale: NonNegativeFloat = 0.05
    n_items: PositiveInt = 6000
    height: PositiveInt = 14
    width: PositiveInt = 14
    seed: int = 0

    def fingerprint(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()[:16]


class Dataset(TensorRecord):
    """
    Flattened images with optional ground truth.

    Attributes:
        items: (N, H*W) intensities in [0, 1].
        height: Image height.
        width: Image width.
        messages: (N, M) generating messages of synthetic data.
        labels: (N,) class labels of IDX data.
    """

    items: torch.Tensor
    height: PositiveInt
    width: PositiveInt
    messages: torch.Tensor | None = None
    labels: torch.Tensor | None = None

    @field_validator("items")
    @classmethod
    def check_items(cls, value: torch.Tensor) -> torch.Tensor:
        if value.dim() != 2:
            raise ValueError("Dataset items must form an (N, features) matrix")
        if value.numel() and (value.min() < 0.0 or value.max() > 1.0):
            raise ValueError("Dataset intensities must lie in [0, 1]")
        return value.to(DTYPE)

    @model_validator(mode="after")
    def check_shapes(self) -> "Dataset":
        n = self.items.shape[0]
        if self.items.shape[1] != self.height * self.width:
            raise ValueError("Item size does not match height * width")
        for name in ("messages", "labels"):
            extra = getattr(self, name)
            if extra is not None and extra.shape[0] != n:
                raise ValueError(f"Dataset {name} must have one row per item")
        return self

    def __len__(self) -> int:
        return self.items.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.items.shape[1]

    def subset(self, indices: torch.Tensor | slice) -> "Dataset":
        return Dataset(
            items=self.items[indices],
            height=self.height,
            width=self.width,
            messages=None if self.messages is None else self.messages[indices],
            labels=None if self.labels is None else self.labels[indices],
        )


class DataConfig(Base):
    """
    Where experiment data comes from.

    Attributes:
        source: Synthetic generator or IDX files.
        images: IDX image file.
        labels: IDX label file.
        downsample: Mean-pooling factor applied after loading.
        n_train: Items used for training.
        n_test: Items held out after the training items.
        synthetic: Generating process when source is synthetic.
        cache: Container file synthetic data is cached in.
    """

    source: Literal["synthetic", "idx"] = "synthetic"
    images: str | None = None
    labels: str | None = None
    downsample: PositiveInt = 1
    n_train: PositiveInt = 5000
    n_test: PositiveInt = 1000
    synthetic: SyntheticSpec = SyntheticSpec()
    cache: str | None = None

    @model_validator(mode="after")
    def check_source(self) -> "DataConfig":
        if self.source == "idx" and self.images is None:
            raise ValueError("data.images is required for IDX data")
        return self
