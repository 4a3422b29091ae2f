from codedvae.exceptions import CodedVAEError, DataError, NumericError, ShapeError


class NetworkShapeError(ShapeError):
    """Input does not match the network plan."""


class NonFiniteError(NumericError):
    """
    Non-finite value produced during evaluation.

    Attributes:
        layer: Index of the layer that produced it, when known.
    """

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


class TapeConsumedError(CodedVAEError):
    """A gradient tape was replayed after its backward pass."""


class CheckpointError(DataError):
    """Checkpoint file missing, malformed or inconsistent with its header."""
