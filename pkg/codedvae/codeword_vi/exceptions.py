from codedvae.models.exceptions import SampleCountError


class BaselineSampleError(SampleCountError):
    """The leave-one-out baseline needs at least two samples."""
