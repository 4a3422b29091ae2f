import logging
import math

import torch
import torch.nn.functional as F

from codedvae.coding.exceptions import LengthMismatchError
from codedvae.coding.schemas import BitWord, SoftWord
from codedvae.diffcore.config import DTYPE
from codedvae.models.exceptions import SampleCountError, UnsupportedModelError
from codedvae.models.models import CodedDVAE, DiscreteVAE, HierCodedDVAE
from codedvae.models.schemas import ElboTerms, PriorSpec
from codedvae.smoothing.schemas import NoiseDraw, SmoothingParams
from codedvae.smoothing.services import (
    conditional_inverse_cdf,
    mixture_log_pdf,
    sample_smoothed,
)

logger = logging.getLogger(__name__)


def _require_factorized(model: DiscreteVAE, operation: str) -> None:
    if not model.factorized:
        logger.error(f"{operation} needs a factorized posterior", exc_info=False)
        raise UnsupportedModelError(
            f"{operation} is not defined for {model.kind} models"
        )


def encoder_posterior(model: DiscreteVAE, x: torch.Tensor) -> SoftWord:
    """
    Raw encoder output: q(m|x) for uncoded models, q^u(c|x) for coded ones.

    Args:
        model: Any model.
        x: Items, shape (..., data_dim).
    Returns:
        Clamped per-position probabilities.
    """
    return model.encode(x)


def infer_coded(model: CodedDVAE, x: torch.Tensor) -> tuple[SoftWord, SoftWord]:
    """
    Soft-decode the encoder output, then soft-encode the result.

    Args:
        model: Coded model.
        x: Items.
    Returns:
        (q_m, q_c), both differentiable with respect to the encoder.
    """
    if not isinstance(model, CodedDVAE):
        raise UnsupportedModelError(f"infer_coded needs a coded model, got {model.kind}")
    post = model.posterior(x)
    return post.q_m, post.q_c


def message_posterior(model: DiscreteVAE, x: torch.Tensor) -> SoftWord:
    """
    Posterior bit probabilities of the generating message.

    Hierarchical models return (q_m1, q_m2) concatenated.
    """
    return model.message_probs(x)


def kl_bernoulli(q: SoftWord, prior: PriorSpec) -> torch.Tensor:
    """
    Closed-form KL between factorized Bernoullis, summed over the last dimension.

    Args:
        q: Clamped posterior probabilities.
        prior: Prior with shared bit probability nu.
    Returns:
        KL in nats, one value per item.
    """
    nu = prior.nu
    per_bit = q.probs * (q.log_p1 - math.log(nu)) + (1.0 - q.probs) * (
        q.log_p0 - math.log1p(-nu)
    )
    return per_bit.sum(dim=-1)


def log_likelihood(model: DiscreteVAE, x: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
    """
    Bernoulli log-likelihood log p(x|z) summed over pixels.

    Args:
        model: Model whose decoder maps z to logits.
        x: Intensities in [0, 1], broadcast against leading sample dimensions of z.
        z: Relaxed latents.
    Returns:
        One value per (sample, item).
    """
    logits = model.decode_logits(z)
    target = x.expand_as(logits)
    return -F.binary_cross_entropy_with_logits(logits, target, reduction="none").sum(dim=-1)


def elbo(model: DiscreteVAE, x: torch.Tensor, noise: NoiseDraw) -> ElboTerms:
    """
    Single-sample ELBO with the closed-form KL over message bits.

    For coded models the KL is taken over q(m|x), never over the soft-encoded
    q(c|x); z is sampled from the soft-encoded probabilities.

    Args:
        model: Factorized model.
        x: Items, shape (B, data_dim) or (data_dim,).
        noise: One uniform per latent position and item.
    Returns:
        Per-item ELBO and its parts.
    """
    _require_factorized(model, "elbo")
    post = model.posterior(x)
    z = sample_smoothed(post.q_c, noise, model.smoothing)
    recon = log_likelihood(model, x, z)
    kls = [kl_bernoulli(branch, model.prior) for branch in post.branches]
    kl = torch.stack(kls).sum(dim=0)
    return ElboTerms(
        value=recon - kl,
        recon=recon,
        kl1=kls[0],
        kl2=kls[1] if len(kls) > 1 else None,
    )


def elbo_hier(model: HierCodedDVAE, x: torch.Tensor, noise: NoiseDraw) -> ElboTerms:
    """
    Two-KL ELBO of the hierarchical model.

    Args:
        model: Hierarchical model.
        x: Items.
        noise: One uniform per position of (z1, z2).
    Returns:
        Per-item ELBO with kl1 = KL(q_m1||p) and kl2 = KL(q_m2||p).
    """
    if not isinstance(model, HierCodedDVAE):
        raise UnsupportedModelError(f"elbo_hier needs a hierarchical model, got {model.kind}")
    return elbo(model, x, noise)


def marginal_z_logpdf(q: SoftWord, z: torch.Tensor, p: SmoothingParams) -> torch.Tensor:
    """Log density of z under the factorized mixture with bit probabilities q."""
    return mixture_log_pdf(q.probs, z, p).sum(dim=-1)


def importance_log_weights(model: DiscreteVAE, x: torch.Tensor, noise: NoiseDraw) -> torch.Tensor:
    """
    log w = log p(x|z) + log p(z) - log q(z|x) for each of k draws.

    The proposal is the factorized mixture z is sampled from; the prior
    density marginalizes the message bits through the model's code.

    Args:
        model: Factorized model.
        x: Items.
        noise: Draws of shape (k, ..., latent_dim).
    Returns:
        Log weights of shape (k, ...).
    """
    _require_factorized(model, "importance weighting")
    post = model.posterior(x)
    z = sample_smoothed(post.q_c, noise, model.smoothing)
    log_q = marginal_z_logpdf(post.q_c, z, model.smoothing)
    return log_likelihood(model, x, z) + model.prior_z_logpdf(z) - log_q


def iwae_bound(model: DiscreteVAE, x: torch.Tensor, k: int, noise: NoiseDraw) -> torch.Tensor:
    """
    Importance-weighted bound log(1/k sum_i w_i), stabilized by log-sum-exp.

    Args:
        model: Factorized model.
        x: Items.
        k: Number of importance samples.
        noise: Draws of shape (k, ..., latent_dim).
    Returns:
        The bound per item.
    """
    if k < 1:
        raise SampleCountError("The importance-weighted bound needs k >= 1")
    if noise.rho.dim() < 2 or noise.rho.shape[0] != k:
        raise SampleCountError(f"Expected {k} noise draws along the first dimension")
    log_w = importance_log_weights(model, x, noise)
    return torch.logsumexp(log_w, dim=0) - math.log(k)


def sample_prior_messages(
    model: DiscreteVAE, batch_shape: tuple[int, ...], generator: torch.Generator | None = None
) -> BitWord:
    draws = torch.rand((*batch_shape, model.message_len), generator=generator, dtype=DTYPE)
    return BitWord(bits=(draws < model.prior.nu).to(torch.long))


@torch.no_grad()
def generate(
    model: DiscreteVAE,
    noise: NoiseDraw,
    m: BitWord | None = None,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, BitWord]:
    """
    Generate items from messages through hard codewords.

    Args:
        model: Any model.
        noise: One uniform per latent position and item.
        m: Messages; drawn from the prior with generator when absent.
        generator: Generator for prior draws.
    Returns:
        Decoder means in (0, 1) and the messages used.
    """
    if m is None:
        m = sample_prior_messages(model, tuple(noise.rho.shape[:-1]), generator)
    if len(m) != model.message_len:
        raise LengthMismatchError(
            f"Messages of length {len(m)} given to a model with {model.message_len} bits"
        )
    c = model.codeword(m)
    z = conditional_inverse_cdf(c.bits, noise.rho, model.smoothing)
    return model.decode_mean(z), m


@torch.no_grad()
def reconstruct(
    model: DiscreteVAE,
    x: torch.Tensor,
    noise: NoiseDraw,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, SoftWord]:
    """
    Decode a posterior sample of z.

    Args:
        model: Any model.
        x: Items.
        noise: One uniform per latent position and item.
        generator: Source of codeword draws for codeword-level models.
    Returns:
        Reconstructions and the message posterior.
    """
    z = model.sample_latent(x, noise, generator)
    return model.decode_mean(z), model.message_probs(x)
