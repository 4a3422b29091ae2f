from codedvae.exceptions import ConfigError, ShapeError


class DataShapeError(ShapeError):
    """Input items do not match the model's data dimension."""


class UnsupportedModelError(ConfigError):
    """Operation requested on a model kind that does not provide it."""


class SampleCountError(ShapeError):
    """Importance sampling asked for no samples, or noise of the wrong count."""
