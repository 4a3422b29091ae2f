import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

from codedvae import __version__
from codedvae.cli.schemas import ExperimentConfig, Manifest, Subcommand
from codedvae.config import settings
from codedvae.exceptions import ArtifactError
from codedvae.repository import ArtifactRepository

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunSession:
    """
    An open run directory.

    Attributes:
        run_dir: Directory receiving the run's artifacts.
        manifest: Provenance record, rewritten when the session closes.
    """

    def __init__(self, run_dir: Path, manifest: Manifest) -> None:
        self.run_dir = run_dir
        self.manifest = manifest

    def path(self, name: str) -> Path:
        """Path of an artifact inside the run directory, recorded in the manifest."""
        if name not in self.manifest.artifacts:
            self.manifest.artifacts.append(name)
        return self.run_dir / name


class RunSessionManager:
    """
    Creates run directories and keeps their manifests current.

    Attributes:
        root: Directory run directories are created under.
    """

    def __init__(self, root: Path | str) -> None:
        self.root = Path(root)
        self._manifests = ArtifactRepository(Manifest)

    def run_dir(self, command: Subcommand, seed: int, output: Path | None = None) -> Path:
        if output is not None:
            return Path(output)
        return self.root / f"{command}-seed{seed}"

    @contextmanager
    def session(
        self,
        command: Subcommand,
        config: ExperimentConfig,
        seed: int,
        output: Path | None = None,
        arguments: dict[str, Any] | None = None,
    ) -> Iterator[RunSession]:
        """
        Open a run directory whose manifest tracks the run's outcome.

        Args:
            command: Subcommand of the run.
            config: Effective experiment configuration.
            seed: Effective seed.
            output: Run directory; derived from the command and seed when None.
            arguments: Command options the outputs depend on.
        Returns:
            The open session; its manifest is marked failed if the body raises.
        """
        run_dir = self.run_dir(command, seed, output)
        try:
            run_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Could not create run directory {run_dir}", exc_info=False)
            raise ArtifactError(f"Could not create run directory {run_dir}: {e}") from e
        manifest = Manifest(
            command=command,
            config=config.model_dump(mode="json"),
            seed=seed,
            arguments=dict(arguments or {}),
            version=__version__,
        )
        self._manifests.save(run_dir / MANIFEST_NAME, manifest)
        run = RunSession(run_dir, manifest)
        try:
            yield run
        except Exception:
            run.manifest.status = "failed"
            self._manifests.save(run_dir / MANIFEST_NAME, run.manifest)
            raise
        run.manifest.status = "completed"
        self._manifests.save(run_dir / MANIFEST_NAME, run.manifest)
        logger.info(f"Run {command} finished in {run_dir}")


sessionmanager = RunSessionManager(settings.output_dir)


def load_manifest(run_dir: Path | str) -> Manifest:
    return ArtifactRepository(Manifest).load(Path(run_dir) / MANIFEST_NAME)
