import logging
import math
from typing import TYPE_CHECKING

import torch

from codedvae.codeword_vi.exceptions import BaselineSampleError
from codedvae.codeword_vi.schemas import CategoricalPosterior
from codedvae.coding.exceptions import LengthMismatchError
from codedvae.coding.schemas import BitWord, Codebook, SoftWord
from codedvae.coding.services import index_to_messages
from codedvae.diffcore.config import DTYPE
from codedvae.diffcore.services import GradientBuffer
from codedvae.models.exceptions import SampleCountError
from codedvae.models.schemas import ElboTerms
from codedvae.models.services import log_likelihood
from codedvae.smoothing.config import RHO_DELTA
from codedvae.smoothing.services import conditional_inverse_cdf, conditional_log_pdf

if TYPE_CHECKING:
    from codedvae.codeword_vi.models import CodewordDVAE

logger = logging.getLogger(__name__)


def categorical_posterior(q_u: SoftWord, book: Codebook) -> CategoricalPosterior:
    """
    q(c|x) proportional to p(c) q^u(c|x) over the codebook, with uniform p(c).

    Args:
        q_u: Per-position encoder probabilities, length D.
        book: Codebook of D-bit words.
    Returns:
        Normalized posterior over the codebook.
    """
    if len(q_u) != book.code_len:
        logger.error("Encoder output does not match the codebook", exc_info=False)
        raise LengthMismatchError(
            f"Posterior of length {len(q_u)} for a codebook of length {book.code_len}"
        )
    words = book.words.to(q_u.probs.dtype)
    log_unnorm = q_u.log_p1 @ words.T + q_u.log_p0 @ (1.0 - words).T
    log_norm = torch.logsumexp(log_unnorm, dim=-1)
    return CategoricalPosterior(
        log_weights=log_unnorm - log_norm.unsqueeze(-1), log_norm=log_norm, book=book
    )


def sample_codeword(
    post: CategoricalPosterior, generator: torch.Generator | None = None, samples: int = 1
) -> tuple[torch.Tensor, BitWord]:
    """
    Categorical draws from the posterior.

    Args:
        post: Posterior, shape (..., K).
        generator: Seeded generator.
        samples: Draws per item.
    Returns:
        Indices of shape (samples, ...) and the corresponding codewords.
    """
    weights = post.weights.detach()
    flat = weights.reshape(-1, weights.shape[-1])
    drawn = torch.multinomial(flat, samples, replacement=True, generator=generator)
    indices = drawn.T.reshape(samples, *weights.shape[:-1])
    return indices, BitWord(bits=post.book.words[indices])


def codeword_message_posterior(post: CategoricalPosterior) -> SoftWord:
    """Per-bit marginals q(m_k=1) of the categorical posterior, message index order."""
    messages = index_to_messages(post.book.index_len)[: len(post.book)]
    return SoftWord(probs=post.weights @ messages.to(post.log_weights.dtype))


def kl_codeword(post: CategoricalPosterior) -> torch.Tensor:
    # KL(q(c|x) || uniform) by enumeration
    return (post.weights * post.log_weights).sum(dim=-1) + math.log(len(post))


def _picked_log_weights(post: CategoricalPosterior, indices: torch.Tensor) -> torch.Tensor:
    expanded = post.log_weights.expand(indices.shape[0], *post.log_weights.shape)
    return torch.gather(expanded, -1, indices.unsqueeze(-1)).squeeze(-1)


def _modulate(
    model: "CodewordDVAE", words: torch.Tensor, generator: torch.Generator | None
) -> torch.Tensor:
    rho = torch.rand(words.shape, generator=generator, dtype=DTYPE)
    return conditional_inverse_cdf(words, rho.clamp(RHO_DELTA, 1.0 - RHO_DELTA), model.smoothing)


def elbo_word(
    model: "CodewordDVAE",
    x: torch.Tensor,
    post: CategoricalPosterior,
    samples: int,
    generator: torch.Generator | None = None,
    exact_kl: bool = True,
) -> ElboTerms:
    """
    Monte-Carlo ELBO of the codeword-level model.

    Codewords are drawn from the posterior and modulated into z through the
    conditional inverse CDFs.

    Args:
        model: Codeword-level model.
        x: Items.
        post: Posterior of x over the model's codebook.
        samples: Draws S per item.
        generator: Seeded generator for codeword and noise draws.
        exact_kl: Enumerate the KL; otherwise estimate it from the same draws.
    Returns:
        Per-item ELBO estimate and its parts.
    """
    if samples < 1:
        raise SampleCountError("elbo_word needs at least one sample")
    indices, words = sample_codeword(post, generator, samples)
    z = _modulate(model, words.bits, generator)
    recon = log_likelihood(model, x, z).mean(dim=0)
    if exact_kl:
        kl = kl_codeword(post)
    else:
        kl = _picked_log_weights(post, indices).mean(dim=0) + math.log(len(post))
    return ElboTerms(value=recon - kl, recon=recon, kl1=kl)


def reinforce_loo_step(
    model: "CodewordDVAE",
    x: torch.Tensor,
    samples: int,
    generator: torch.Generator | None = None,
    baseline: bool = True,
) -> tuple[GradientBuffer, ElboTerms]:
    """
    Gradients of the negated ELBO: score function for the encoder, pathwise
    for the decoder.

    With f_s = log q(c_s|x) - log p(x|z_s) - log p(c_s) the encoder estimate is
    1/(S-1) sum_s (f_s - mean f) grad log q(c_s|x); without the baseline it is
    1/S sum_s f_s grad log q(c_s|x). Both are summed over the batch.

    Args:
        model: Codeword-level model.
        x: Items, shape (B, data_dim) or (data_dim,).
        samples: Draws S per item.
        generator: Seeded generator.
        baseline: Use the leave-one-out baseline.
    Returns:
        Gradients keyed by parameter name and the ELBO estimate of the draws.
    """
    if baseline and samples < 2:
        raise BaselineSampleError("The leave-one-out estimator needs S >= 2")
    if samples < 1:
        raise SampleCountError("reinforce needs at least one sample")
    post = categorical_posterior(model.encode(x), model.book)
    indices, words = sample_codeword(post, generator, samples)
    z = _modulate(model, words.bits, generator)
    recon = log_likelihood(model, x, z)
    log_q = _picked_log_weights(post, indices)
    f = (log_q - recon + math.log(len(post))).detach()
    if baseline:
        coefficient = (f - f.mean(dim=0)) / (samples - 1)
    else:
        coefficient = f / samples
    surrogate = (coefficient * log_q).sum() - recon.mean(dim=0).sum()
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(surrogate, params, allow_unused=True)
    buffer = {
        name: torch.zeros_like(p) if g is None else g
        for name, p, g in zip(names, params, grads)
    }
    with torch.no_grad():
        kl = kl_codeword(post)
        terms = ElboTerms(value=recon.mean(dim=0) - kl, recon=recon.mean(dim=0), kl1=kl)
    return buffer, terms


def reinforce_loo_grads(
    model: "CodewordDVAE",
    x: torch.Tensor,
    samples: int,
    generator: torch.Generator | None = None,
    baseline: bool = True,
) -> GradientBuffer:
    return reinforce_loo_step(model, x, samples, generator, baseline)[0]


def enumerated_negative_elbo(
    model: "CodewordDVAE",
    x: torch.Tensor,
    inner_samples: int,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """
    Negated ELBO with the expectation over codewords done exactly.

    Only the expectation over z given each codeword is estimated, from
    inner_samples draws shared by all codewords. Its gradient is the
    reference the score-function estimator is checked against.

    Args:
        model: Codeword-level model with an enumerable codebook.
        x: Items.
        inner_samples: Noise draws per codeword.
        generator: Seeded generator.
    Returns:
        The negated ELBO summed over the batch.
    """
    items = x if x.dim() > 1 else x.unsqueeze(0)
    post = categorical_posterior(model.encode(items), model.book)
    words = model.book.words
    rho = torch.rand((inner_samples, *words.shape), generator=generator, dtype=DTYPE)
    z = conditional_inverse_cdf(words, rho.clamp(RHO_DELTA, 1.0 - RHO_DELTA), model.smoothing)
    # z is (S, K, D), shared by every item
    z = z.unsqueeze(1).expand(inner_samples, items.shape[0], *words.shape)
    recon = log_likelihood(model, items.unsqueeze(-2), z).mean(dim=0)
    expected_recon = (post.weights * recon).sum(dim=-1)
    return (kl_codeword(post) - expected_recon).sum()


def codeword_log_weights(
    model: "CodewordDVAE", x: torch.Tensor, k: int, generator: torch.Generator | None = None
) -> torch.Tensor:
    """
    Importance log-weights with the codeword mixture as proposal.

    q(z|x) = sum_i q(c_i|x) p(z|c_i) and p(z) = 1/K sum_i p(z|c_i).

    Args:
        model: Codeword-level model.
        x: Items.
        k: Draws per item.
        generator: Seeded generator.
    Returns:
        Log weights of shape (k, ...).
    """
    if k < 1:
        raise SampleCountError("Importance sampling needs k >= 1")
    post = categorical_posterior(model.encode(x), model.book)
    _, words = sample_codeword(post, generator, k)
    z = _modulate(model, words.bits, generator)
    per_word = conditional_log_pdf(z.unsqueeze(-2), model.book.words, model.smoothing).sum(dim=-1)
    log_q = torch.logsumexp(post.log_weights + per_word, dim=-1)
    return log_likelihood(model, x, z) + model.prior_z_logpdf(z) - log_q
