import json
import logging
import re
from collections.abc import Iterable
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from codedvae.cli.config import COMMENT_PREFIX
from codedvae.cli.exceptions import ConfigSyntaxError, ConfigValueError
from codedvae.cli.schemas import ExperimentConfig
from codedvae.helpers import resolve_seed

logger = logging.getLogger(__name__)

_KEY = re.compile(r"[A-Za-z_]\w*(\.[A-Za-z_]\w*)*")


def parse_value(raw: str) -> Any:
    """JSON scalars and lists where they parse, plain strings otherwise."""
    text = raw.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_assignment(text: str, line: int | None = None) -> tuple[str, Any]:
    key, sep, value = text.partition("=")
    key = key.strip()
    if not sep:
        raise ConfigSyntaxError(f"expected key=value, got {text.strip()!r}", line)
    if not _KEY.fullmatch(key):
        raise ConfigSyntaxError(f"invalid key {key!r}", line)
    return key, parse_value(value)


def parse_config_lines(lines: Iterable[str]) -> dict[str, Any]:
    """
    Read key=value lines into a flat mapping of dotted keys.

    Args:
        lines: Lines of a configuration file; blank lines and lines starting
            with # are skipped.
    Returns:
        Values by dotted key. Repeated keys are errors.
    """
    flat: dict[str, Any] = {}
    for number, text in enumerate(lines, start=1):
        stripped = text.strip()
        if not stripped or stripped.startswith(COMMENT_PREFIX):
            continue
        key, value = parse_assignment(stripped, number)
        if key in flat:
            raise ConfigSyntaxError(f"duplicate key {key!r}", number)
        flat[key] = value
    return flat


def nest(flat: dict[str, Any]) -> dict[str, Any]:
    tree: dict[str, Any] = {}
    for key, value in flat.items():
        *parents, leaf = key.split(".")
        node = tree
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigSyntaxError(f"{key!r} nests under a value")
        if isinstance(node.get(leaf), dict):
            raise ConfigSyntaxError(f"{key!r} replaces a section")
        node[leaf] = value
    return tree


def load_experiment(path: Path | str | None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    """
    Build the experiment configuration from a file and command-line overrides.

    Args:
        path: key=value file; None starts from the defaults.
        overrides: key=value strings applied after the file.
    Returns:
        The validated configuration, seed already resolved against
        CODEDVAE_SEED.
    """
    flat: dict[str, Any] = {}
    if path is not None:
        try:
            flat = parse_config_lines(Path(path).read_text().splitlines())
        except OSError as e:
            logger.error(f"Could not read configuration {path}", exc_info=False)
            raise ConfigValueError(f"Could not read configuration {path}: {e}") from e
    for override in overrides:
        key, value = parse_assignment(override)
        flat[key] = value
    try:
        config = ExperimentConfig.model_validate(nest(flat))
    except ValidationError as e:
        logger.error("Invalid experiment configuration", exc_info=False)
        errors = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
        )
        raise ConfigValueError(errors) from e
    seed = resolve_seed(config.seed)
    if seed != config.seed:
        logger.info(f"Seed {config.seed} overridden by CODEDVAE_SEED={seed}")
    return config.model_copy(update={"seed": seed})


def dump_experiment(config: ExperimentConfig) -> str:
    """The configuration as key=value lines load_experiment reads back."""
    lines = []

    def walk(prefix: str, node: Any) -> None:
        if isinstance(node, dict):
            for key, value in node.items():
                walk(f"{prefix}.{key}" if prefix else key, value)
        elif node is not None:
            lines.append(f"{prefix} = {json.dumps(node)}")

    walk("", config.model_dump(mode="json"))
    return "\n".join(lines) + "\n"
