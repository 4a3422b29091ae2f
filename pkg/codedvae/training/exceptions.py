from codedvae.exceptions import ConfigError, NumericError, ShapeError


class NonFiniteLossError(NumericError):
    """
    Training produced a non-finite objective.

    Attributes:
        epoch: Epoch of the failing batch, starting at 1.
        batch: Index of the failing batch within the epoch.
    """

    def __init__(self, epoch: int, batch: int):
        super().__init__(f"Non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class GradientShapeError(ShapeError):
    """Gradient does not match the parameter it updates."""


class ObjectiveError(ConfigError):
    """Objective not available for the configured model kind."""
