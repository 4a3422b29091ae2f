import json
import logging
import sys

from pydantic import ValidationError

from codedvae.cli import services  # noqa: F401  registers the subcommands
from codedvae.cli.router import router
from codedvae.config import settings
from codedvae.exceptions import CodedVAEError, ConfigError

logger = logging.getLogger(__name__)


def error_line(error: CodedVAEError) -> str:
    return (
        f"error code={error.exit_code} type={type(error).__name__}"
        f" message={json.dumps(str(error))}"
    )


def run(argv: list[str] | None = None) -> int:
    """
    Parse a command line, dispatch it and map failures to exit codes.

    Args:
        argv: Arguments without the program name; sys.argv when None.
    Returns:
        0 on success, the error's exit code otherwise.
    """
    try:
        try:
            return router.dispatch(router.parse(argv))
        except ValidationError as e:
            raise ConfigError(str(e)) from e
    except CodedVAEError as e:
        logger.error(f"{type(e).__name__}: {e}", exc_info=False)
        print(error_line(e), file=sys.stderr)
        return e.exit_code


def start() -> None:
    logging.basicConfig(
        level=settings.log_level.upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    sys.exit(run())


if __name__ == "__main__":
    start()
