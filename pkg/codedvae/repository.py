import csv
import json
import logging
from pathlib import Path
from typing import Generic, TypeVar

from pydantic import BaseModel, ValidationError

from codedvae.exceptions import ArtifactError

logger = logging.getLogger(__name__)
Schema = TypeVar("Schema", bound=BaseModel)


class ArtifactRepository(Generic[Schema]):
    """
    Repository for records stored as JSON files and CSV rows.

    Attributes:
        schema: The record type read and written.
        root: Directory relative paths are resolved against.
    """

    def __init__(self, schema: type[Schema], root: Path | str = ".") -> None:
        self.schema: type[Schema] = schema
        self.root = Path(root)

    def save(self, path: Path | str, record: Schema) -> Path:
        """
        Write a record as indented JSON.

        Args:
            path: Destination file.
            record: Record to write.
        Returns:
            The path written.
        """
        target = self.root / path
        try:
            logger.debug(f"Writing {self.schema.__name__} to {target}")
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(record.model_dump_json(indent=2) + "\n")
            logger.info(f"Wrote {self.schema.__name__} to {target}")
            return target
        except OSError as e:
            logger.error(f"Could not write {target}", exc_info=False)
            raise ArtifactError(f"Could not write {target}: {e}") from e

    def load(self, path: Path | str) -> Schema:
        """
        Read and validate a record.

        Args:
            path: JSON file.
        Returns:
            The validated record.
        """
        source = self.root / path
        try:
            logger.debug(f"Reading {self.schema.__name__} from {source}")
            record = self.schema.model_validate_json(source.read_text())
            logger.info(f"Read {self.schema.__name__} from {source}")
            return record
        except OSError as e:
            logger.error(f"Could not read {source}", exc_info=False)
            raise ArtifactError(f"Could not read {source}: {e}") from e
        except ValidationError as e:
            logger.error(f"{source} is not a valid {self.schema.__name__}", exc_info=False)
            raise ArtifactError(f"{source} is not a valid {self.schema.__name__}: {e}") from e

    def append_row(self, path: Path | str, record: Schema) -> Path:
        """
        Append a flat record as one CSV row, writing the header for a new file.

        Args:
            path: CSV file.
            record: Record whose fields are scalars.
        Returns:
            The path written.
        """
        target = self.root / path
        values = json.loads(record.model_dump_json())
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            is_new = not target.exists() or target.stat().st_size == 0
            with target.open("a", newline="") as handle:
                writer = csv.DictWriter(handle, fieldnames=list(values))
                if is_new:
                    writer.writeheader()
                writer.writerow(values)
            logger.debug(f"Appended a {self.schema.__name__} row to {target}")
            return target
        except OSError as e:
            logger.error(f"Could not append to {target}", exc_info=False)
            raise ArtifactError(f"Could not append to {target}: {e}") from e
