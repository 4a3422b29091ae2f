import logging
import math

import torch

from codedvae.coding.exceptions import LengthMismatchError
from codedvae.coding.schemas import SoftWord
from codedvae.diffcore.config import DTYPE
from codedvae.smoothing.config import RHO_DELTA
from codedvae.smoothing.exceptions import DiscriminantError, SupportError
from codedvae.smoothing.schemas import NoiseDraw, SmoothingParams

logger = logging.getLogger(__name__)


def _as_tensor(value: torch.Tensor | float) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value
    return torch.tensor(value, dtype=DTYPE)


def _check_unit_interval(z: torch.Tensor) -> None:
    if torch.any(z < 0.0) or torch.any(z > 1.0):
        raise SupportError("z must lie in [0, 1]")


def _check_open_interval(rho: torch.Tensor) -> None:
    if torch.any(rho <= 0.0) or torch.any(rho >= 1.0):
        raise SupportError("rho must lie strictly inside (0, 1)")


def conditional_log_pdf(
    z: torch.Tensor | float, bit: torch.Tensor | int, p: SmoothingParams
) -> torch.Tensor:
    z = _as_tensor(z)
    _check_unit_interval(z)
    bit = torch.as_tensor(bit)
    log_one = p.beta * (z - 1.0)
    log_zero = -p.beta * z
    return torch.where(bit == 1, log_one, log_zero) - math.log(p.z_norm)


def conditional_pdf(
    z: torch.Tensor | float, bit: torch.Tensor | int, p: SmoothingParams
) -> torch.Tensor:
    """
    Density of the relaxed latent given its bit.

    Args:
        z: Points in [0, 1].
        bit: 0 or 1, broadcastable against z.
        p: Smoothing parameters.
    Returns:
        e^{beta(z-1)}/Z for bit 1, e^{-beta z}/Z for bit 0.
    """
    return torch.exp(conditional_log_pdf(z, bit, p))


def conditional_inverse_cdf(
    bit: torch.Tensor | int, rho: torch.Tensor | float, p: SmoothingParams
) -> torch.Tensor:
    """
    Inverse CDF of p(z|bit), used to modulate hard codewords.

    Args:
        bit: 0 or 1, broadcastable against rho.
        rho: Uniform draws in (0, 1).
        p: Smoothing parameters.
    Returns:
        Samples z in [0, 1].
    """
    rho = _as_tensor(rho)
    _check_open_interval(rho)
    bit = torch.as_tensor(bit)
    z_zero = -torch.log1p(-rho * p.span) / p.beta
    z_one = torch.log(rho * p.span + p.tail) / p.beta + 1.0
    return torch.where(bit == 1, z_one, z_zero).clamp(0.0, 1.0)


def mixture_log_pdf(
    q: torch.Tensor, z: torch.Tensor, p: SmoothingParams
) -> torch.Tensor:
    """Elementwise log[(1-q) p(z|0) + q p(z|1)]."""
    log_zero = conditional_log_pdf(z, 0, p)
    log_one = conditional_log_pdf(z, 1, p)
    return torch.logaddexp(torch.log1p(-q) + log_zero, torch.log(q) + log_one)


def mixture_pdf(q: torch.Tensor, z: torch.Tensor, p: SmoothingParams) -> torch.Tensor:
    return torch.exp(mixture_log_pdf(q, z, p))


def mixture_cdf(
    q: torch.Tensor | float, z: torch.Tensor | float, p: SmoothingParams
) -> torch.Tensor:
    """
    CDF of the marginal mixture (1-q) p(z|0) + q p(z|1).

    Args:
        q: Probability of bit 1.
        z: Points in [0, 1].
        p: Smoothing parameters.
    Returns:
        Values in [0, 1], 0 at z = 0 and 1 at z = 1.
    """
    q, z = _as_tensor(q), _as_tensor(z)
    _check_unit_interval(z)
    cdf_zero = -torch.expm1(-p.beta * z) / p.span
    cdf_one = (torch.exp(p.beta * (z - 1.0)) - p.tail) / p.span
    return (1.0 - q) * cdf_zero + q * cdf_one


def mixture_inverse_cdf(
    q: torch.Tensor | float, rho: torch.Tensor | float, p: SmoothingParams
) -> torch.Tensor:
    """
    Inverse CDF of the marginal mixture, differentiable in q and rho.

    z = -(1/beta) log((-b + sqrt(b^2 - 4c)) / 2) with
    b = (rho + e^{-beta}(q - rho)) / (1 - q) - 1 and c = -q e^{-beta} / (1 - q).
    For b > 0 the root is evaluated as -2c / (b + sqrt(b^2 - 4c)).

    Args:
        q: Probability of bit 1, clamped to [eps, 1-eps] by the caller.
        rho: Uniform draws in (0, 1).
        p: Smoothing parameters.
    Returns:
        Samples z in [0, 1].
    """
    q, rho = _as_tensor(q), _as_tensor(rho)
    _check_open_interval(rho)
    b = (rho + p.tail * (q - rho)) / (1.0 - q) - 1.0
    c = -q * p.tail / (1.0 - q)
    discriminant = b * b - 4.0 * c
    if torch.any(discriminant < 0.0):
        logger.error("Negative discriminant in mixture inverse CDF", exc_info=False)
        raise DiscriminantError("Negative discriminant in mixture inverse CDF")
    root_disc = torch.sqrt(discriminant)
    positive = b > 0.0
    # unused branch of torch.where still receives gradients, keep it finite
    stable_den = torch.where(positive, b + root_disc, torch.ones_like(b))
    root = torch.where(positive, -2.0 * c / stable_den, (root_disc - b) / 2.0)
    return (-torch.log(root) / p.beta).clamp(0.0, 1.0)


def draw_noise(
    shape: tuple[int, ...] | torch.Size,
    generator: torch.Generator,
    seed: int | None = None,
) -> NoiseDraw:
    """
    Uniform draws for the inverse CDFs, clipped away from 0 and 1.

    Args:
        shape: Shape of the draw.
        generator: Seeded generator consumed by the draw.
        seed: Seed recorded as provenance.
    Returns:
        The noise draw.
    """
    rho = torch.rand(tuple(shape), generator=generator, dtype=DTYPE)
    return NoiseDraw(rho=rho.clamp(RHO_DELTA, 1.0 - RHO_DELTA), seed=seed)


def sample_smoothed(q_c: SoftWord, noise: NoiseDraw, p: SmoothingParams) -> torch.Tensor:
    """
    Reparameterized draw of z from the factorized mixture posterior.

    Args:
        q_c: Per-position probabilities.
        noise: Uniform draws; leading sample dimensions broadcast against q_c.
        p: Smoothing parameters.
    Returns:
        z with the broadcast shape of q_c and noise.
    """
    if len(noise) != len(q_c):
        raise LengthMismatchError(
            f"Noise length {len(noise)} does not match posterior length {len(q_c)}"
        )
    return mixture_inverse_cdf(q_c.probs, noise.rho, p)
