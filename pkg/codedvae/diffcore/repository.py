import logging
from pathlib import Path

import torch
from pydantic import ValidationError
from torch import nn

from codedvae.diffcore.exceptions import CheckpointError
from codedvae.diffcore.schemas import CheckpointHeader

logger = logging.getLogger(__name__)


class CheckpointRepository:
    """
    Persists network parameters with a versioned header.

    The file is a torch archive holding {"header": dict, "tensors": {name: tensor}},
    where the header records the format name, version, model architecture
    (plans, beta, code specs) and seed. Tensor shapes travel with the tensors.

    Attributes:
        root: Directory relative paths are resolved against.
    """

    def __init__(self, root: Path | str = ".") -> None:
        self.root = Path(root)

    def _resolve(self, path: Path | str) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.root / path

    def save(self, path: Path | str, module: nn.Module, header: CheckpointHeader) -> Path:
        """
        Write a checkpoint.

        Args:
            path: Destination file.
            module: Module whose state dict is stored.
            header: Architecture and provenance.
        Returns:
            The resolved path written.
        """
        target = self._resolve(path)
        try:
            logger.debug(f"Saving checkpoint to {target}")
            target.parent.mkdir(parents=True, exist_ok=True)
            tensors = {k: v.detach().clone() for k, v in module.state_dict().items()}
            torch.save({"header": header.model_dump(), "tensors": tensors}, target)
            logger.info(f"Saved checkpoint {target}")
            return target
        except OSError as e:
            logger.error(f"Could not write checkpoint {target}", exc_info=False)
            raise CheckpointError(f"Could not write checkpoint {target}: {e}") from e

    def load(self, path: Path | str) -> tuple[CheckpointHeader, dict[str, torch.Tensor]]:
        """
        Read a checkpoint.

        Args:
            path: Checkpoint file.
        Returns:
            The validated header and the named tensors.
        """
        source = self._resolve(path)
        if not source.is_file():
            logger.error(f"Checkpoint {source} not found", exc_info=False)
            raise CheckpointError(f"Checkpoint {source} not found")
        try:
            payload = torch.load(source, weights_only=True)
            header = CheckpointHeader.model_validate(payload["header"])
            tensors = payload["tensors"]
            logger.info(f"Loaded checkpoint {source}")
            return header, tensors
        except (KeyError, TypeError, ValidationError) as e:
            logger.error(f"Malformed checkpoint {source}", exc_info=False)
            raise CheckpointError(f"Malformed checkpoint {source}: {e}") from e
        except Exception as e:
            logger.error(f"Unreadable checkpoint {source}", exc_info=False)
            raise CheckpointError(f"Unreadable checkpoint {source}: {e}") from e


def save_checkpoint(path: Path | str, module: nn.Module, header: CheckpointHeader) -> Path:
    return CheckpointRepository().save(path, module, header)


def load_checkpoint(path: Path | str) -> tuple[CheckpointHeader, dict[str, torch.Tensor]]:
    return CheckpointRepository().load(path)
