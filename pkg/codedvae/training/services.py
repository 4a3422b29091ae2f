import logging
import math
import time
from collections.abc import Callable
from pathlib import Path

import torch

from codedvae.codeword_vi.models import CodewordDVAE
from codedvae.codeword_vi.services import categorical_posterior, elbo_word, reinforce_loo_step
from codedvae.data_io.schemas import Dataset
from codedvae.data_io.services import batch_iter
from codedvae.diffcore.services import GradientBuffer
from codedvae.helpers import make_generator
from codedvae.models.models import CodedDVAE, DiscreteVAE, HierCodedDVAE, UncodedDVAE
from codedvae.models.schemas import ElboTerms
from codedvae.models.services import elbo, iwae_bound
from codedvae.smoothing.schemas import NoiseDraw
from codedvae.smoothing.services import draw_noise
from codedvae.training.config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS
from codedvae.training.exceptions import GradientShapeError, NonFiniteLossError, ObjectiveError
from codedvae.training.models import AdamState
from codedvae.training.repository import RunLogRepository, save_model
from codedvae.training.schemas import RunLog, RunLogRow, TrainConfig

logger = logging.getLogger(__name__)

StepFn = Callable[
    [DiscreteVAE, torch.Tensor, TrainConfig, torch.Generator],
    tuple[GradientBuffer, ElboTerms],
]


@torch.no_grad()
def adam_step(
    params: dict[str, torch.Tensor],
    grads: GradientBuffer,
    state: AdamState,
    lr: float,
) -> AdamState:
    """
    One Adam update with bias correction, applied in place.

    Args:
        params: Parameters by name.
        grads: Gradients by name, aligned with params.
        state: Moment estimates, updated in place.
        lr: Step size.
    Returns:
        The updated state. Steps with non-finite gradients are skipped.
    """
    for name, param in params.items():
        if name not in grads or grads[name].shape != param.shape:
            logger.error(f"Gradient for {name} missing or misshapen", exc_info=False)
            raise GradientShapeError(f"Gradient for {name} does not match its parameter")
    if not all(torch.isfinite(grads[name]).all() for name in params):
        state.rejected += 1
        logger.warning(f"Rejected optimizer step {state.t + 1}: non-finite gradient")
        return state
    state.t += 1
    correction1 = 1.0 - ADAM_BETA1**state.t
    correction2 = 1.0 - ADAM_BETA2**state.t
    for name, param in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = torch.zeros_like(param)
            state.v[name] = torch.zeros_like(param)
        state.m[name].mul_(ADAM_BETA1).add_(g, alpha=1.0 - ADAM_BETA1)
        state.v[name].mul_(ADAM_BETA2).addcmul_(g, g, value=1.0 - ADAM_BETA2)
        denom = (state.v[name] / correction2).sqrt_().add_(ADAM_EPS)
        param.addcdiv_(state.m[name], denom, value=-lr / correction1)
    return state


def _gradients(model: DiscreteVAE, loss: torch.Tensor) -> GradientBuffer:
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return {n: torch.zeros_like(p) if g is None else g for n, p, g in zip(names, params, grads)}


def elbo_step(
    model: DiscreteVAE, x: torch.Tensor, cfg: TrainConfig, generator: torch.Generator
) -> tuple[GradientBuffer, ElboTerms]:
    """Gradients of the batch-mean negated single-sample ELBO."""
    noise = draw_noise((x.shape[0], model.latent_dim), generator)
    terms = elbo(model, x, noise)
    return _gradients(model, -terms.value.mean()), terms


def iwae_step(
    model: DiscreteVAE, x: torch.Tensor, cfg: TrainConfig, generator: torch.Generator
) -> tuple[GradientBuffer, ElboTerms]:
    """
    Gradients of the batch-mean negated importance-weighted bound.

    The logged recon and KL come from the first of the k draws.
    """
    noise = draw_noise((cfg.iwae_k, x.shape[0], model.latent_dim), generator)
    bound = iwae_bound(model, x, cfg.iwae_k, noise)
    grads = _gradients(model, -bound.mean())
    with torch.no_grad():
        first = elbo(model, x, NoiseDraw(rho=noise.rho[0], seed=noise.seed))
    return grads, first.model_copy(update={"value": bound.detach()})


def word_step(
    model: DiscreteVAE, x: torch.Tensor, cfg: TrainConfig, generator: torch.Generator
) -> tuple[GradientBuffer, ElboTerms]:
    """Score-function encoder gradients and pathwise decoder gradients, batch mean."""
    grads, terms = reinforce_loo_step(model, x, cfg.samples, generator, cfg.baseline)
    return {name: g / x.shape[0] for name, g in grads.items()}, terms


@torch.no_grad()
def heldout_elbo(model: DiscreteVAE, data: Dataset, cfg: TrainConfig, seed: int) -> float:
    """Mean single-sample ELBO over held-out items with seeded noise."""
    generator = make_generator(seed)
    total = 0.0
    for batch in batch_iter(data, cfg.batch_size):
        if isinstance(model, CodewordDVAE):
            post = categorical_posterior(model.encode(batch.items), model.book)
            terms = elbo_word(model, batch.items, post, cfg.samples, generator)
        else:
            noise = draw_noise((len(batch), model.latent_dim), generator)
            terms = elbo(model, batch.items, noise)
        total += float(terms.value.sum())
    return total / len(data)


def _fit(
    model: DiscreteVAE,
    data: Dataset,
    cfg: TrainConfig,
    step: StepFn,
    seed: int,
    heldout: Dataset | None,
    run_dir: Path | None,
) -> RunLog:
    model.check_items(data.items)
    generator = make_generator(seed)
    params = dict(model.named_parameters())
    state = AdamState()
    log = RunLog()
    best, stale = -math.inf, 0
    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        sums = {"elbo": 0.0, "recon": 0.0, "kl": 0.0, "kl2": 0.0}
        grad_norm = 0.0
        n_batches = 0
        for index, batch in enumerate(batch_iter(data, cfg.batch_size, seed=(seed, epoch))):
            grads, terms = step(model, batch.items, cfg, generator)
            if not torch.isfinite(terms.value).all():
                logger.error(f"Non-finite objective at batch {index}", exc_info=False)
                raise NonFiniteLossError(epoch, index)
            adam_step(params, grads, state, cfg.learning_rate)
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if math.isfinite(norm):
                grad_norm += norm
            n_batches += 1
            sums["elbo"] += float(terms.value.sum())
            sums["recon"] += float(terms.recon.sum())
            sums["kl"] += float(terms.kl1.sum())
            if terms.kl2 is not None:
                sums["kl2"] += float(terms.kl2.sum())
            logger.debug(f"Epoch {epoch} batch {index}: elbo {float(terms.value.mean()):.4f}")
        row = RunLogRow(
            epoch=epoch,
            elbo=sums["elbo"] / len(data),
            recon=sums["recon"] / len(data),
            kl=sums["kl"] / len(data),
            kl2=sums["kl2"] / len(data) if isinstance(model, HierCodedDVAE) else None,
            grad_norm=grad_norm / n_batches,
            seconds=time.perf_counter() - started,
        )
        if heldout is not None and cfg.patience is not None:
            row.heldout_elbo = heldout_elbo(model, heldout, cfg, seed + epoch)
        log.append(row)
        logger.info(
            f"Epoch {epoch}: elbo {row.elbo:.4f} recon {row.recon:.4f} kl {row.kl:.4f}"
            f" grad_norm {row.grad_norm:.4f} ({row.seconds:.2f}s)"
        )
        if row.heldout_elbo is not None:
            if row.heldout_elbo > best:
                best, stale = row.heldout_elbo, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.warning(f"Stopping early at epoch {epoch}, held-out ELBO stalled")
                    log.stopped_early = True
                    break
    if run_dir is not None:
        RunLogRepository().write(Path(run_dir) / cfg.runlog, log)
        save_model(Path(run_dir) / cfg.checkpoint, model, seed)
    return log


def _pick_step(model: DiscreteVAE, cfg: TrainConfig) -> StepFn:
    if isinstance(model, CodewordDVAE):
        if cfg.objective != "elbo":
            raise ObjectiveError("Codeword-level models train on the ELBO only")
        return word_step
    return iwae_step if cfg.objective == "iwae" else elbo_step


def _require(model: DiscreteVAE, kind: type[DiscreteVAE], operation: str) -> None:
    if not isinstance(model, kind):
        logger.error(f"{operation} given a {model.kind} model", exc_info=False)
        raise ObjectiveError(f"{operation} needs a {kind.kind} model, got {model.kind}")


def train_uncoded(
    model: UncodedDVAE,
    data: Dataset,
    cfg: TrainConfig,
    seed: int = 0,
    heldout: Dataset | None = None,
    run_dir: Path | None = None,
) -> tuple[UncodedDVAE, RunLog]:
    """
    Train an uncoded model: encoder, inverse-CDF sample, decoder, ELBO, Adam.

    Args:
        model: Model to train in place.
        data: Training items.
        cfg: Optimization settings.
        seed: Seed of the shuffling and the noise.
        heldout: Items for early stopping.
        run_dir: Directory receiving the run log and the checkpoint.
    Returns:
        The trained model and its run log.
    """
    _require(model, UncodedDVAE, "train_uncoded")
    return model, _fit(model, data, cfg, _pick_step(model, cfg), seed, heldout, run_dir)


def train_coded(
    model: CodedDVAE,
    data: Dataset,
    cfg: TrainConfig,
    seed: int = 0,
    heldout: Dataset | None = None,
    run_dir: Path | None = None,
) -> tuple[CodedDVAE, RunLog]:
    """As train_uncoded, with soft decoding and soft encoding between encoder and sampling."""
    _require(model, CodedDVAE, "train_coded")
    return model, _fit(model, data, cfg, _pick_step(model, cfg), seed, heldout, run_dir)


def train_hier(
    model: HierCodedDVAE,
    data: Dataset,
    cfg: TrainConfig,
    seed: int = 0,
    heldout: Dataset | None = None,
    run_dir: Path | None = None,
) -> tuple[HierCodedDVAE, RunLog]:
    _require(model, HierCodedDVAE, "train_hier")
    return model, _fit(model, data, cfg, _pick_step(model, cfg), seed, heldout, run_dir)


def train_word(
    model: CodewordDVAE,
    data: Dataset,
    cfg: TrainConfig,
    seed: int = 0,
    heldout: Dataset | None = None,
    run_dir: Path | None = None,
) -> tuple[CodewordDVAE, RunLog]:
    """
    Train a codeword-level model with the leave-one-out score-function
    estimator for the encoder and pathwise decoder gradients.
    """
    _require(model, CodewordDVAE, "train_word")
    return model, _fit(model, data, cfg, _pick_step(model, cfg), seed, heldout, run_dir)


TRAINERS = {
    "uncoded": train_uncoded,
    "coded": train_coded,
    "hierarchical": train_hier,
    "word": train_word,
}


def train(
    model: DiscreteVAE,
    data: Dataset,
    cfg: TrainConfig,
    seed: int = 0,
    heldout: Dataset | None = None,
    run_dir: Path | None = None,
) -> tuple[DiscreteVAE, RunLog]:
    return TRAINERS[model.kind](model, data, cfg, seed, heldout, run_dir)
