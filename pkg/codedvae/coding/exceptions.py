from codedvae.exceptions import CapacityError, ShapeError


class LengthMismatchError(ShapeError):
    """A word's length does not match the code or its partner word."""


class EmptyCodebookError(ShapeError):
    """Minimum-distance decoding against a codebook without words."""


class CodebookCapacityError(CapacityError):
    """Exhaustive codebook requested for too many information bits."""


class DistinctnessError(CapacityError):
    """More distinct codewords requested than the word length allows."""
