import csv
import logging
from pathlib import Path

from codedvae.diffcore.exceptions import CheckpointError
from codedvae.diffcore.repository import CheckpointRepository
from codedvae.diffcore.schemas import CheckpointHeader
from codedvae.models.models import DiscreteVAE
from codedvae.models.schemas import ModelSpec
from codedvae.training.config import RUNLOG_COLUMNS
from codedvae.training.schemas import RunLog, RunLogRow
from codedvae.training.utils import build_model

logger = logging.getLogger(__name__)


class RunLogRepository:
    """Run logs as CSV with the columns epoch,elbo,recon,kl,kl2,grad_norm,seconds."""

    def write(self, path: Path | str, log: RunLog) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=RUNLOG_COLUMNS, extrasaction="ignore")
            writer.writeheader()
            for row in log.rows:
                values = row.model_dump()
                writer.writerow(
                    {k: "" if values[k] is None else repr(values[k]) for k in RUNLOG_COLUMNS}
                )
        logger.info(f"Wrote {len(log)} run log rows to {path}")
        return path

    def read(self, path: Path | str) -> RunLog:
        log = RunLog()
        with Path(path).open(newline="") as handle:
            for record in csv.DictReader(handle):
                log.append(RunLogRow(**{k: v for k, v in record.items() if v != ""}))
        return log


def save_model(path: Path | str, model: DiscreteVAE, seed: int) -> Path:
    header = CheckpointHeader(architecture=model.architecture(), seed=seed)
    return CheckpointRepository().save(path, model, header)


def load_model(path: Path | str) -> tuple[DiscreteVAE, CheckpointHeader]:
    """
    Rebuild a model from a checkpoint.

    Args:
        path: Checkpoint file.
    Returns:
        The model with its stored parameters and the checkpoint header.
    """
    header, tensors = CheckpointRepository().load(path)
    try:
        model = build_model(ModelSpec.model_validate(header.architecture), header.seed)
        model.load_state_dict(tensors)
    except (ValueError, RuntimeError) as e:
        logger.error(f"Checkpoint {path} does not match its architecture", exc_info=False)
        raise CheckpointError(f"Checkpoint {path} does not match its architecture: {e}") from e
    return model, header
