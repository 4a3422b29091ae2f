from codedvae.exceptions import ConfigError


class ConfigSyntaxError(ConfigError):
    """
    Malformed configuration line.

    Attributes:
        line: One-based line number, when read from a file.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ConfigValueError(ConfigError):
    """Configuration keys unknown to the experiment schema, or invalid values."""


class UsageError(ConfigError):
    """Command line rejected by the argument parser."""
