from codedvae.exceptions import NumericError, ShapeError


class SupportError(ShapeError):
    """A latent value z or a uniform draw rho lies outside its support."""


class DiscriminantError(NumericError):
    """Negative discriminant in the mixture inverse CDF."""
