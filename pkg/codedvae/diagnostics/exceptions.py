from codedvae.exceptions import CapacityError, ShapeError


class EnumerationCapacityError(CapacityError):
    """Exact posterior enumeration requested for too many message bits."""


class TrialCountError(ShapeError):
    """Error rates requested over no trials."""


class ImageShapeError(ShapeError):
    """Images compared by PSNR do not have equal shapes."""


class BlankImageError(ShapeError):
    """PSNR requested for a reference image whose peak intensity is zero."""
