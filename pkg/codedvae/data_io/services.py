import gzip
import logging
import math
import struct
from collections.abc import Iterator, Sequence
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from codedvae.coding.schemas import BitWord, CodeSpec
from codedvae.coding.services import hard_encode
from codedvae.data_io.config import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    IDX_MAX_BYTES,
    IDX_UBYTE,
)
from codedvae.data_io.exceptions import EmptyDatasetError, IdxParseError
from codedvae.data_io.schemas import Dataset, SyntheticSpec
from codedvae.diffcore.config import DTYPE
from codedvae.diffcore.models import MultilayerPerceptron
from codedvae.diffcore.schemas import NetworkPlan
from codedvae.helpers import make_generator
from codedvae.smoothing.schemas import SmoothingParams
from codedvae.smoothing.services import conditional_inverse_cdf, draw_noise

logger = logging.getLogger(__name__)


def _read_bytes(path: Path | str) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    try:
        with opener(path, "rb") as handle:
            return handle.read()
    except OSError as e:
        logger.error(f"Could not read {path}", exc_info=False)
        raise IdxParseError(f"Could not read {path}: {e}", 0) from e


def parse_idx(data: bytes) -> np.ndarray:
    """
    Parse an unsigned-byte IDX payload.

    The header is two zero bytes, a type byte (0x08), a dimension count and one
    big-endian 32-bit size per dimension; the payload follows in C order.

    Args:
        data: Raw file contents.
    Returns:
        uint8 array with the header's shape.
    """
    if len(data) < 4:
        raise IdxParseError(f"File holds {len(data)} bytes, the magic needs 4", len(data))
    if data[0] != 0 or data[1] != 0:
        raise IdxParseError("Bad magic number", 0)
    if data[2] != IDX_UBYTE:
        raise IdxParseError(f"Unsupported element type 0x{data[2]:02x}", 2)
    ndim = data[3]
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise IdxParseError(
            f"Header needs {header_len} bytes, file holds {len(data)}", len(data)
        )
    dims = struct.unpack(f">{ndim}I", data[4:header_len])
    expected = math.prod(dims)
    if expected > IDX_MAX_BYTES:
        raise IdxParseError(f"Dimensions {dims} overflow the payload limit", 4)
    actual = len(data) - header_len
    if actual != expected:
        raise IdxParseError(
            f"Expected {expected} payload bytes, got {actual}", header_len + min(actual, expected)
        )
    return np.frombuffer(data, dtype=np.uint8, offset=header_len).reshape(dims)


def read_idx_tensor(path: Path | str) -> np.ndarray:
    """Parse an IDX file, gzip-compressed when its name ends in .gz."""
    try:
        return parse_idx(_read_bytes(path))
    except IdxParseError as e:
        logger.error(f"Malformed IDX file {path}", exc_info=False)
        raise e


def encode_idx(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    header = struct.pack(f">BBBB{array.ndim}I", 0, 0, IDX_UBYTE, array.ndim, *array.shape)
    return header + array.tobytes()


def write_idx(path: Path | str, array: np.ndarray) -> Path:
    """
    Serialize a uint8 array as IDX.

    Args:
        path: Destination; gzip-compressed when the name ends in .gz.
        array: Array of any rank.
    Returns:
        The path written.
    """
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as handle:
        handle.write(encode_idx(array))
    logger.info(f"Wrote IDX tensor {tuple(array.shape)} to {path}")
    return path


def read_idx(images_path: Path | str, labels_path: Path | str | None = None) -> Dataset:
    """
    Load an IDX image file and its optional label file.

    Args:
        images_path: File with magic 0x00000803.
        labels_path: File with magic 0x00000801 and one label per image.
    Returns:
        Dataset with intensities scaled by 1/255.
    """
    raw = _read_bytes(images_path)
    images = parse_idx(raw)
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != IDX_IMAGES_MAGIC:
        logger.error(f"{images_path} is not an image file", exc_info=False)
        raise IdxParseError(f"Expected image magic 0x{IDX_IMAGES_MAGIC:08x}, got 0x{magic:08x}", 0)
    n, height, width = images.shape
    labels = None
    if labels_path is not None:
        raw_labels = _read_bytes(labels_path)
        parsed = parse_idx(raw_labels)
        if struct.unpack(">I", raw_labels[:4])[0] != IDX_LABELS_MAGIC:
            raise IdxParseError(f"Expected label magic 0x{IDX_LABELS_MAGIC:08x}", 0)
        if parsed.shape[0] != n:
            raise IdxParseError(f"{parsed.shape[0]} labels for {n} images", 4)
        labels = torch.from_numpy(parsed.astype(np.int64))
    items = torch.from_numpy(images.reshape(n, -1).astype(np.float64) / 255.0)
    logger.info(f"Loaded {n} images of {height}x{width} from {images_path}")
    return Dataset(items=items, height=height, width=width, labels=labels)


def synthetic_decoder(spec: SyntheticSpec, generator: torch.Generator) -> MultilayerPerceptron:
    code_len = spec.info_len * spec.repeat
    plan = NetworkPlan(sizes=[code_len, spec.hidden, spec.height * spec.width])
    return MultilayerPerceptron(plan, generator)


@torch.no_grad()
def synth_generate(spec: SyntheticSpec) -> Dataset:
    """
    Sample a dataset from a fixed random coded generative model.

    m ~ Bernoulli(0.5)^M, c = repetition codeword of m, z ~ p(z|c) by the
    conditional inverse CDFs, x = sigmoid(contrast * f(z)) + noise, clipped to [0, 1].

    Args:
        spec: Generating process.
    Returns:
        Dataset carrying the generating messages.
    """
    generator = make_generator(spec.seed)
    decoder = synthetic_decoder(spec, generator)
    code = CodeSpec(info_len=spec.info_len, repeat=spec.repeat)
    m = (torch.rand((spec.n_items, spec.info_len), generator=generator, dtype=DTYPE) < 0.5).long()
    c = hard_encode(code, BitWord(bits=m))
    noise = draw_noise(c.bits.shape, generator, spec.seed)
    z = conditional_inverse_cdf(c.bits, noise.rho, SmoothingParams(beta=spec.beta))
    x = torch.sigmoid(spec.contrast * decoder(z))
    x = x + spec.noise_scale * torch.randn(x.shape, generator=generator, dtype=DTYPE)
    logger.info(f"Generated {spec.n_items} synthetic items, fingerprint {spec.fingerprint()}")
    return Dataset(
        items=x.clamp(0.0, 1.0), height=spec.height, width=spec.width, messages=m
    )


def batch_iter(
    dataset: Dataset, batch_size: int, seed: int | Sequence[int] | None = None
) -> Iterator[Dataset]:
    """
    Shuffled batches covering every item once; the last one may be short.

    Args:
        dataset: Items to batch.
        batch_size: Items per batch.
        seed: Seed of the permutation; None keeps the stored order.
    Returns:
        Iterator of sub-datasets.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("Cannot batch an empty dataset")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if seed is None:
        order = torch.arange(len(dataset))
    else:
        order = torch.from_numpy(np.random.default_rng(seed).permutation(len(dataset)))
    for start in range(0, len(dataset), batch_size):
        yield dataset.subset(order[start : start + batch_size])


def downsample(dataset: Dataset, factor: int = 2) -> Dataset:
    """
    Center-crop to a multiple of factor and mean-pool factor x factor blocks.

    Args:
        dataset: Images to reduce.
        factor: Pooling size; 2 turns 28x28 into 14x14.
    Returns:
        The reduced dataset.
    """
    if factor == 1:
        return dataset
    height, width = dataset.height // factor * factor, dataset.width // factor * factor
    top, left = (dataset.height - height) // 2, (dataset.width - width) // 2
    images = dataset.items.reshape(-1, 1, dataset.height, dataset.width)
    images = images[:, :, top : top + height, left : left + width]
    pooled = F.avg_pool2d(images, factor)
    return Dataset(
        items=pooled.reshape(len(dataset), -1),
        height=height // factor,
        width=width // factor,
        messages=dataset.messages,
        labels=dataset.labels,
    )


def split(dataset: Dataset, n_train: int, n_test: int) -> tuple[Dataset, Dataset]:
    """First n_train items for training, the following n_test for testing."""
    if n_train + n_test > len(dataset):
        raise EmptyDatasetError(
            f"Requested {n_train} + {n_test} items from a dataset of {len(dataset)}"
        )
    return (
        dataset.subset(slice(0, n_train)),
        dataset.subset(slice(n_train, n_train + n_test)),
    )


def tile_images(images: torch.Tensor, columns: int = 8, padding: int = 1) -> torch.Tensor:
    """
    Arrange (N, H, W) images in a grid with a dark border between cells.

    Args:
        images: Intensities in [0, 1].
        columns: Cells per row.
        padding: Border width in pixels.
    Returns:
        One (rows*(H+p)+p, cols*(W+p)+p) image.
    """
    n, height, width = images.shape
    columns = max(1, min(columns, n))
    rows = math.ceil(n / columns)
    grid = torch.zeros(
        (rows * (height + padding) + padding, columns * (width + padding) + padding),
        dtype=images.dtype,
    )
    for index in range(n):
        row, col = divmod(index, columns)
        top = padding + row * (height + padding)
        left = padding + col * (width + padding)
        grid[top : top + height, left : left + width] = images[index]
    return grid
