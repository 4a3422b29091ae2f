from codedvae.exceptions import DataError


class IdxParseError(DataError):
    """
    Malformed IDX file.

    Attributes:
        offset: Byte offset the problem was detected at.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EmptyDatasetError(DataError):
    """Operation requires at least one item."""


class ContainerError(DataError):
    """Synthetic dataset container is missing, malformed or stale."""
