class CodedVAEError(Exception):
    """
    Base class for every error raised by the package.

    Attributes:
        exit_code: Process exit status used by the command-line entry point.
    """

    exit_code: int = 1


class ConfigError(CodedVAEError):
    exit_code = 2


class ShapeError(CodedVAEError, ValueError):
    exit_code = 2


class CapacityError(CodedVAEError, ValueError):
    exit_code = 2


class DataError(CodedVAEError):
    exit_code = 3


class NumericError(CodedVAEError, ArithmeticError):
    exit_code = 4


class ArtifactError(DataError):
    """A run artifact could not be written, read or validated."""
