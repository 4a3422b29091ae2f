import logging
import re
import struct
from pathlib import Path

import numpy as np
import torch

from codedvae.data_io.config import CONTAINER_MAGIC, CONTAINER_VERSION
from codedvae.data_io.exceptions import ContainerError
from codedvae.data_io.schemas import Dataset, SyntheticSpec

logger = logging.getLogger(__name__)

# magic, version, fingerprint, N, H, W, M
_HEADER = struct.Struct(">4sI16sIIII")


class SyntheticRepository:
    """
    Binary cache of synthetic datasets.

    Layout, all integers big-endian: 4-byte magic "CDVS", u32 version,
    16-byte spec fingerprint, u32 N, u32 H, u32 W, u32 M, then N*H*W float64
    intensities and N*M message bytes.

    Attributes:
        root: Directory relative paths are resolved against.
    """

    def __init__(self, root: Path | str = ".") -> None:
        self.root = Path(root)

    def save(self, path: Path | str, dataset: Dataset, spec: SyntheticSpec) -> Path:
        """
        Write a synthetic dataset.

        Args:
            path: Destination file.
            dataset: Dataset carrying messages.
            spec: Spec the dataset was generated from.
        Returns:
            The path written.
        """
        target = self.root / path
        if dataset.messages is None:
            raise ContainerError("Only datasets with messages can be cached")
        try:
            logger.debug(f"Writing synthetic container {target}")
            target.parent.mkdir(parents=True, exist_ok=True)
            header = _HEADER.pack(
                CONTAINER_MAGIC,
                CONTAINER_VERSION,
                spec.fingerprint().encode(),
                len(dataset),
                dataset.height,
                dataset.width,
                dataset.messages.shape[1],
            )
            items = dataset.items.numpy().astype(">f8").tobytes()
            messages = dataset.messages.numpy().astype(np.uint8).tobytes()
            target.write_bytes(header + items + messages)
            logger.info(f"Cached {len(dataset)} synthetic items in {target}")
            return target
        except OSError as e:
            logger.error(f"Could not write {target}", exc_info=False)
            raise ContainerError(f"Could not write {target}: {e}") from e

    def load(self, path: Path | str, spec: SyntheticSpec | None = None) -> Dataset:
        """
        Read a synthetic dataset.

        Args:
            path: Container file.
            spec: When given, the stored fingerprint must match it.
        Returns:
            The cached dataset.
        """
        source = self.root / path
        try:
            data = source.read_bytes()
        except OSError as e:
            logger.error(f"Could not read {source}", exc_info=False)
            raise ContainerError(f"Could not read {source}: {e}") from e
        if len(data) < _HEADER.size:
            raise ContainerError(f"{source} is shorter than its header")
        magic, version, fingerprint, n, height, width, m = _HEADER.unpack_from(data)
        if magic != CONTAINER_MAGIC or version != CONTAINER_VERSION:
            raise ContainerError(f"{source} is not a version {CONTAINER_VERSION} container")
        if spec is not None and fingerprint.decode() != spec.fingerprint():
            logger.warning(f"Cached dataset {source} was generated from another spec")
            raise ContainerError(f"{source} does not match the requested spec")
        n_values = n * height * width
        expected = _HEADER.size + 8 * n_values + n * m
        if len(data) != expected:
            raise ContainerError(f"{source} holds {len(data)} bytes, expected {expected}")
        items = np.frombuffer(data, dtype=">f8", count=n_values, offset=_HEADER.size)
        messages = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size + 8 * n_values)
        logger.info(f"Loaded {n} cached synthetic items from {source}")
        return Dataset(
            items=torch.from_numpy(items.astype(np.float64).reshape(n, height * width)),
            height=height,
            width=width,
            messages=torch.from_numpy(messages.astype(np.int64).reshape(n, m)),
        )


def save_synthetic(path: Path | str, dataset: Dataset, spec: SyntheticSpec) -> Path:
    return SyntheticRepository().save(path, dataset, spec)


def load_synthetic(path: Path | str, spec: SyntheticSpec | None = None) -> Dataset:
    return SyntheticRepository().load(path, spec)


def write_pgm(path: Path | str, image: torch.Tensor) -> Path:
    """
    Write a 2-D image with intensities in [0, 1] as binary 8-bit PGM (P5).

    Args:
        path: Destination file.
        image: (H, W) tensor.
    Returns:
        The path written.
    """
    path = Path(path)
    height, width = image.shape
    pixels = (image.detach().clamp(0.0, 1.0) * 255.0).round().to(torch.uint8).numpy()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode() + pixels.tobytes())
    logger.debug(f"Wrote {width}x{height} image {path}")
    return path


def read_pgm(path: Path | str) -> torch.Tensor:
    data = Path(path).read_bytes()
    # exactly one whitespace byte separates maxval from the pixels
    header = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if header is None or int(header.group(3)) != 255:
        raise ContainerError(f"{path} is not an 8-bit binary PGM")
    width, height = int(header.group(1)), int(header.group(2))
    array = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=header.end())
    return torch.from_numpy(array.reshape(height, width).astype(np.float64) / 255.0)
