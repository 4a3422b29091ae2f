import logging
import math
from collections.abc import Callable

import numpy as np
import torch
import torch.nn.functional as F
from scipy import stats

from codedvae.codeword_vi.models import CodewordDVAE
from codedvae.codeword_vi.services import (
    categorical_posterior,
    codeword_log_weights,
    sample_codeword,
)
from codedvae.coding.schemas import BitWord, CodeSpec, SoftWord
from codedvae.coding.services import index_to_messages, map_bits, soft_decode
from codedvae.data_io.schemas import Dataset
from codedvae.data_io.services import batch_iter
from codedvae.diagnostics.config import (
    GAP_ITEM_CHUNK,
    GAP_MAX_BITS,
    GAP_MIN_SAMPLES,
    GAP_SLACK_SIGMAS,
)
from codedvae.diagnostics.exceptions import (
    BlankImageError,
    EnumerationCapacityError,
    ImageShapeError,
    TrialCountError,
)
from codedvae.diagnostics.schemas import (
    ChannelReport,
    ErrorReport,
    EvalConfig,
    GapEstimate,
    GapSweep,
    ImportanceEstimate,
    MetricReport,
)
from codedvae.diffcore.config import DTYPE
from codedvae.helpers import make_generator
from codedvae.models.exceptions import SampleCountError
from codedvae.models.models import DiscreteVAE, HierCodedDVAE
from codedvae.models.services import generate, importance_log_weights, reconstruct
from codedvae.smoothing.services import conditional_inverse_cdf, draw_noise

logger = logging.getLogger(__name__)

# maps (items x, enumerated log p(m|x)) to log q(m|x), both (N, 2^M)
QFamily = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def _sampled_messages(
    model: DiscreteVAE, x: torch.Tensor, q_m: SoftWord, generator: torch.Generator
) -> torch.Tensor:
    if isinstance(model, CodewordDVAE):
        post = categorical_posterior(model.encode(x), model.book)
        indices, _ = sample_codeword(post, generator)
        return index_to_messages(model.spec.info_len)[indices[0]]
    draws = torch.rand(q_m.probs.shape, generator=generator, dtype=q_m.probs.dtype)
    return (draws < q_m.probs).to(torch.long)


def _rates(truth: torch.Tensor, sampled: torch.Tensor, decided: torch.Tensor) -> dict[str, float]:
    wrong_sampled = sampled != truth
    wrong_map = decided != truth
    return {
        "ber_sampled": float(wrong_sampled.to(DTYPE).mean()),
        "ber_map": float(wrong_map.to(DTYPE).mean()),
        "wer_sampled": float(wrong_sampled.any(dim=-1).to(DTYPE).mean()),
        "wer_map": float(wrong_map.any(dim=-1).to(DTYPE).mean()),
    }


@torch.no_grad()
def ber_wer(
    model: DiscreteVAE,
    trials: int,
    generator: torch.Generator,
    chunk: int = 1024,
) -> ErrorReport:
    """
    Error rates of recovering generating messages from generated items.

    Each trial draws m from the prior, generates x through the hard codeword,
    infers q(m|x) and compares one posterior draw and the MAP estimate with m.

    Args:
        model: Any model.
        trials: Number of generated items.
        generator: Seeded generator for messages, noise and posterior draws.
        chunk: Items generated at once.
    Returns:
        Bit and word error rates; hierarchical models add m1 and m2 rates.
    """
    if trials < 1:
        raise TrialCountError("Error rates need at least one trial")
    truth, sampled, decided = [], [], []
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        noise = draw_noise((n, model.latent_dim), generator)
        x, m = generate(model, noise, generator=generator)
        q_m = model.message_probs(x)
        truth.append(m.bits)
        sampled.append(_sampled_messages(model, x, q_m, generator))
        decided.append(map_bits(q_m).bits)
        done += n
        logger.debug(f"Generated {done}/{trials} error-rate trials")
    truth, sampled, decided = (torch.cat(t) for t in (truth, sampled, decided))
    branches = None
    if isinstance(model, HierCodedDVAE):
        sizes = [model.spec.info_len, model.spec.info_len]
        branches = {
            name: ErrorReport(trials=trials, **_rates(*parts))
            for name, *parts in zip(
                ("m1", "m2"),
                truth.split(sizes, dim=-1),
                sampled.split(sizes, dim=-1),
                decided.split(sizes, dim=-1),
            )
        }
    report = ErrorReport(trials=trials, branches=branches, **_rates(truth, sampled, decided))
    logger.info(
        f"BER {report.ber_sampled:.4f} (MAP {report.ber_map:.4f}),"
        f" WER {report.wer_sampled:.4f} (MAP {report.wer_map:.4f}) over {trials} trials"
    )
    return report


def repetition_bit_error(repeat: int, flip_prob: float) -> float:
    """
    Bit error probability of MAP decoding a repetition code over a BSC.

    Errors need more than half of the copies flipped; with an even number of
    copies a tie decodes to 0 and so fails half of the time.

    Args:
        repeat: Copies per bit L.
        flip_prob: Crossover probability p < 0.5.
    Returns:
        The binomial tail probability.
    """
    tail = stats.binom.sf(repeat // 2, repeat, flip_prob)
    if repeat % 2 == 0:
        tail += 0.5 * stats.binom.pmf(repeat // 2, repeat, flip_prob)
    return float(tail)


def simulate_repetition_channel(
    code: CodeSpec,
    flip_prob: float,
    trials: int,
    rng: np.random.Generator,
    chunk: int = 10_000,
) -> ChannelReport:
    """
    Monte-Carlo MAP decoding of a repetition code over a binary symmetric channel.

    Received bits are turned into per-copy probabilities 1-p or p, soft
    decoded and decided by MAP.

    Args:
        code: The repetition code.
        flip_prob: Crossover probability of the channel.
        trials: Messages sent.
        rng: Seeded generator.
        chunk: Messages simulated at once.
    Returns:
        Observed and binomial-tail error rates.
    """
    if trials < 1:
        raise TrialCountError("Channel simulation needs at least one trial")
    bit_errors, word_errors, done = 0, 0, 0
    while done < trials:
        n = min(chunk, trials - done)
        messages = rng.integers(0, 2, size=(n, code.info_len))
        sent = np.repeat(messages, code.repeat, axis=-1)
        flips = rng.random(sent.shape) < flip_prob
        received = np.bitwise_xor(sent, flips.astype(sent.dtype))
        q_c = np.where(received == 1, 1.0 - flip_prob, flip_prob)
        decided = map_bits(soft_decode(code, SoftWord(probs=torch.from_numpy(q_c)))).bits.numpy()
        wrong = decided != messages
        bit_errors += int(wrong.sum())
        word_errors += int(wrong.any(axis=-1).sum())
        done += n
    expected_ber = repetition_bit_error(code.repeat, flip_prob)
    report = ChannelReport(
        repeat=code.repeat,
        info_len=code.info_len,
        flip_prob=flip_prob,
        trials=trials,
        ber=bit_errors / (trials * code.info_len),
        wer=word_errors / trials,
        expected_ber=expected_ber,
        expected_wer=1.0 - (1.0 - expected_ber) ** code.info_len,
    )
    logger.info(
        f"BSC p={flip_prob} L={code.repeat}: BER {report.ber:.5f}"
        f" (binomial {report.expected_ber:.5f}), WER {report.wer:.5f}"
    )
    return report


def psnr(x: torch.Tensor, x_prime: torch.Tensor) -> torch.Tensor:
    """
    Peak signal-to-noise ratio 20 log10(max(x) / RMSE) in dB.

    Args:
        x: Reference images, flattened along the last dimension.
        x_prime: Reconstructions of the same shape.
    Returns:
        One value per image; identical images give +inf. References that
        are entirely zero raise BlankImageError.
    """
    if x.shape != x_prime.shape:
        raise ImageShapeError(f"Cannot compare images of shapes {x.shape} and {x_prime.shape}")
    rmse = (x - x_prime).pow(2).mean(dim=-1).sqrt()
    peak = x.amax(dim=-1)
    if torch.any(peak <= 0):
        logger.error("PSNR reference without a positive peak", exc_info=False)
        raise BlankImageError("PSNR needs reference images with a positive peak intensity")
    ratio = 20.0 * torch.log10(peak / rmse.clamp_min(torch.finfo(rmse.dtype).tiny))
    return torch.where(rmse == 0, torch.full_like(ratio, math.inf), ratio)


def posterior_entropy(q_m: SoftWord) -> torch.Tensor:
    # nats; divide by ln 2 for bits
    q = q_m.probs
    return -(q * q_m.log_p1 + (1.0 - q) * q_m.log_p0).sum(dim=-1)


def loglik_importance(
    model: DiscreteVAE,
    x: torch.Tensor,
    samples: int,
    generator: torch.Generator,
) -> ImportanceEstimate:
    """
    Importance-sampled log-likelihood with the posterior mixture as proposal.

    Args:
        model: Any model.
        x: Items.
        samples: Importance samples S per item.
        generator: Seeded generator.
    Returns:
        log(1/S sum w) and the effective sample size, per item.
    """
    if samples < 1:
        raise SampleCountError("Importance sampling needs at least one sample")
    with torch.no_grad():
        if isinstance(model, CodewordDVAE):
            log_w = codeword_log_weights(model, x, samples, generator)
        else:
            noise = draw_noise((samples, *x.shape[:-1], model.latent_dim), generator)
            log_w = importance_log_weights(model, x, noise)
    total = torch.logsumexp(log_w, dim=0)
    ess = torch.exp(2.0 * total - torch.logsumexp(2.0 * log_w, dim=0))
    return ImportanceEstimate(ll=total - math.log(samples), ess=ess)


def message_prior_log_probs(model: DiscreteVAE, messages: torch.Tensor) -> torch.Tensor:
    nu = model.prior.nu
    bits = messages.to(DTYPE)
    return (bits * math.log(nu) + (1.0 - bits) * math.log1p(-nu)).sum(dim=-1)


def _check_enumerable(model: DiscreteVAE) -> None:
    if model.message_len > GAP_MAX_BITS:
        logger.error(f"Cannot enumerate {model.message_len} message bits", exc_info=False)
        raise EnumerationCapacityError(
            f"Exact posteriors support at most {GAP_MAX_BITS} message bits,"
            f" got {model.message_len}"
        )


@torch.no_grad()
def enumerated_log_posterior(
    model: DiscreteVAE,
    x: torch.Tensor,
    mc_samples: int,
    generator: torch.Generator,
) -> torch.Tensor:
    """
    log p(m|x) over every message of an enumerable model.

    p(x|m) is estimated by averaging p(x|z) over mc_samples draws of z from
    p(z|c(m)), shared by all items.

    Args:
        model: Model with at most four message bits.
        x: Binary items, shape (N, data_dim).
        mc_samples: Draws of z per message.
        generator: Seeded generator.
    Returns:
        Normalized log posterior of shape (N, 2^M), message index order.
    """
    _check_enumerable(model)
    messages = index_to_messages(model.message_len)
    words = model.codeword(BitWord(bits=messages)).bits
    rho = draw_noise((mc_samples, *words.shape), generator).rho
    z = conditional_inverse_cdf(words, rho, model.smoothing)
    logits = model.decode_logits(z).transpose(0, 1)
    ones = F.logsigmoid(logits).reshape(-1, logits.shape[-1])
    zeros = F.logsigmoid(-logits).reshape(-1, logits.shape[-1])
    log_px_m = []
    for part in x.split(GAP_ITEM_CHUNK):
        # (n, K * S) -> (n, K, S)
        ll = (part @ ones.T + (1.0 - part) @ zeros.T).reshape(-1, len(messages), mc_samples)
        log_px_m.append(torch.logsumexp(ll, dim=-1) - math.log(mc_samples))
    joint = message_prior_log_probs(model, messages) + torch.cat(log_px_m)
    return joint - torch.logsumexp(joint, dim=-1, keepdim=True)


def exact_family() -> QFamily:
    return lambda x, log_post: log_post


def model_family(model: DiscreteVAE) -> QFamily:
    """The model's own variational posterior, evaluated on every message."""
    messages = index_to_messages(model.message_len).to(DTYPE)

    def family(x: torch.Tensor, log_post: torch.Tensor) -> torch.Tensor:
        if isinstance(model, CodewordDVAE):
            return categorical_posterior(model.encode(x), model.book).log_weights
        q_m = model.message_probs(x)
        return q_m.log_p1 @ messages.T + q_m.log_p0 @ (1.0 - messages).T

    return family


def perturbed_family(num_messages: int, generator: torch.Generator, scale: float = 1.0) -> QFamily:
    """
    Random tempered and shifted versions of the true posterior.

    Args:
        num_messages: Number of enumerated messages 2^M.
        generator: Seeded generator fixing the temperature and offsets.
        scale: Spread of the per-message offsets.
    Returns:
        A family mapping log p(m|x) to a distorted log q(m|x).
    """
    temperature = float(torch.exp(0.5 * torch.randn((), generator=generator, dtype=DTYPE)))
    offsets = scale * torch.randn(num_messages, generator=generator, dtype=DTYPE)

    def family(x: torch.Tensor, log_post: torch.Tensor) -> torch.Tensor:
        return torch.log_softmax(temperature * log_post + offsets, dim=-1)

    return family


@torch.no_grad()
def generate_binary_items(
    model: DiscreteVAE, n_items: int, generator: torch.Generator
) -> tuple[torch.Tensor, BitWord]:
    noise = draw_noise((n_items, model.latent_dim), generator)
    means, m = generate(model, noise, generator=generator)
    return torch.bernoulli(means, generator=generator), m


@torch.no_grad()
def gap_bound_check(
    model: DiscreteVAE,
    q_family: QFamily,
    mc_samples: int = GAP_MIN_SAMPLES,
    n_items: int = 2000,
    generator: torch.Generator | None = None,
    name: str = "variational",
    items: torch.Tensor | None = None,
    log_post: torch.Tensor | None = None,
) -> GapEstimate:
    """
    Compare Bayes and variational MAP accuracies with the KL bound on their gap.

    Items are drawn from the model itself, so accuracies are computed in
    expectation over the enumerated posterior rather than against the
    generating message.

    Args:
        model: Model with at most four message bits.
        q_family: Variational family under test.
        mc_samples: Draws of z per message for p(x|m).
        n_items: Generated items.
        generator: Seeded generator.
        name: Family name recorded in the estimate.
        items: Pre-generated binary items, reused across families.
        log_post: Enumerated log posterior of items.
    Returns:
        The gap estimate and whether delta exceeds the bound beyond
        three standard errors.
    """
    _check_enumerable(model)
    if mc_samples < GAP_MIN_SAMPLES:
        logger.warning(f"p(x|m) estimated from only {mc_samples} draws per message")
    generator = generator if generator is not None else make_generator(0)
    if items is None:
        items, _ = generate_binary_items(model, n_items, generator)
    if log_post is None:
        log_post = enumerated_log_posterior(model, items, mc_samples, generator)
    log_q = q_family(items, log_post)
    post = log_post.exp()
    q = log_q.exp()
    best_true = post.amax(dim=-1)
    best_var = post.gather(-1, log_q.argmax(dim=-1, keepdim=True)).squeeze(-1)
    per_item_delta = best_true - best_var
    per_item_kl = (q * (log_q - log_post)).sum(dim=-1).clamp_min(0.0)
    n = items.shape[0]
    delta = float(per_item_delta.mean())
    kl_hat = float(per_item_kl.mean())
    delta_se = float(per_item_delta.std()) / math.sqrt(n) if n > 1 else 0.0
    kl_se = float(per_item_kl.std()) / math.sqrt(n) if n > 1 else 0.0
    bound = math.sqrt(-math.expm1(-2.0 * kl_hat))
    loose_bound = math.sqrt(-math.expm1(-2.0 * (kl_hat + GAP_SLACK_SIGMAS * kl_se)))
    slack = GAP_SLACK_SIGMAS * delta_se
    estimate = GapEstimate(
        acc_true=float(best_true.mean()),
        acc_var=float(best_var.mean()),
        delta=delta,
        kl_hat=kl_hat,
        bound=bound,
        slack=slack,
        violated=delta - slack > loose_bound,
        family=name,
    )
    logger.debug(
        f"{name}: delta {delta:.5f} +- {delta_se:.5f}, kl {kl_hat:.5f}, bound {bound:.5f}"
    )
    if estimate.violated:
        logger.warning(f"Gap bound violated by family {name}")
    return estimate


@torch.no_grad()
def gap_bound_sweep(
    model: DiscreteVAE,
    n_families: int,
    mc_samples: int = GAP_MIN_SAMPLES,
    n_items: int = 2000,
    seed: int = 0,
) -> GapSweep:
    """
    Run gap_bound_check on the exact posterior, the model's own posterior and
    n_families random perturbations, sharing items and p(x|m) estimates.

    Args:
        model: Model with at most four message bits.
        n_families: Random families.
        mc_samples: Draws of z per message.
        n_items: Generated items.
        seed: Seed of the items, the estimates and the families.
    Returns:
        Every estimate; violations counts those beyond the slack.
    """
    _check_enumerable(model)
    generator = make_generator(seed)
    items, _ = generate_binary_items(model, n_items, generator)
    log_post = enumerated_log_posterior(model, items, mc_samples, generator)
    families: list[tuple[str, QFamily]] = [
        ("exact", exact_family()),
        ("model", model_family(model)),
    ]
    families += [
        (f"perturbed-{i}", perturbed_family(log_post.shape[-1], generator))
        for i in range(n_families)
    ]
    sweep = GapSweep(info_len=model.message_len, mc_samples=mc_samples, n_items=n_items)
    for name, family in families:
        sweep.estimates.append(
            gap_bound_check(
                model, family, mc_samples, n_items, generator, name, items=items, log_post=log_post
            )
        )
    logger.info(f"Gap sweep over {len(families)} families: {sweep.violations} violations")
    return sweep


def evaluate(
    model: DiscreteVAE,
    dataset: Dataset,
    cfg: EvalConfig,
    seed: int = 0,
) -> MetricReport:
    """
    Error rates on generated items plus reconstruction, entropy and
    likelihood on a dataset.

    Args:
        model: Trained model.
        dataset: Test items.
        cfg: Evaluation settings.
        seed: Seed of every draw.
    Returns:
        Summary metrics; per-item quantities are averaged.
    """
    model.check_items(dataset.items)
    if cfg.n_items is not None:
        dataset = dataset.subset(slice(0, cfg.n_items))
    errors = ber_wer(model, cfg.trials, make_generator(seed), cfg.trial_chunk)
    generator = make_generator(seed + 1)
    psnrs, entropies, lls, esses = [], [], [], []
    blank = 0
    for batch in batch_iter(dataset, cfg.batch_size):
        noise = draw_noise((len(batch), model.latent_dim), generator)
        x_prime, q_m = reconstruct(model, batch.items, noise, generator)
        lit = batch.items.amax(dim=-1) > 0
        blank += int((~lit).sum())
        if lit.any():
            psnrs.append(psnr(batch.items[lit], x_prime[lit]))
        entropies.append(posterior_entropy(q_m).detach())
        estimate = loglik_importance(model, batch.items, cfg.ll_samples, generator)
        lls.append(estimate.ll)
        esses.append(estimate.ess)
    if not psnrs:
        logger.error("Every evaluated item is blank", exc_info=False)
        raise BlankImageError("PSNR needs at least one item with a positive peak intensity")
    if blank:
        logger.warning(f"Left {blank} blank items out of the PSNR mean")
    report = MetricReport(
        ber=errors.ber_sampled,
        ber_map=errors.ber_map,
        wer=errors.wer_sampled,
        wer_map=errors.wer_map,
        psnr_mean=float(torch.cat(psnrs).mean()),
        entropy_mean=float(torch.cat(entropies).mean()),
        ll_mean=float(torch.cat(lls).mean()),
        ess_mean=float(torch.cat(esses).mean()),
    )
    logger.info(
        f"Evaluated {len(dataset)} items: PSNR {report.psnr_mean:.3f} dB,"
        f" entropy {report.entropy_mean:.3f} nats, LL {report.ll_mean:.3f}"
    )
    return report
