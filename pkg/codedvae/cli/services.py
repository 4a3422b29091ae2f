import logging
import math
from contextlib import AbstractContextManager
from pathlib import Path
from typing import Any

import torch

from codedvae.cli.config import (
    CHECKPOINT_NAME,
    DEMO_DATA_DIM,
    DEMO_HIDDEN,
    DEMO_ITEMS,
    GAP_JSON,
    MESSAGES_NAME,
    METRICS_CSV,
    METRICS_JSON,
    RUNLOG_NAME,
)
from codedvae.cli.exceptions import ConfigSyntaxError
from codedvae.cli.router import router
from codedvae.cli.schemas import CliInvocation, ExperimentConfig, PosteriorDump
from codedvae.cli.utils import dump_experiment, load_experiment
from codedvae.coding.schemas import BitWord
from codedvae.config import settings
from codedvae.data_io.repository import load_synthetic, save_synthetic, write_pgm
from codedvae.data_io.schemas import DataConfig, Dataset
from codedvae.data_io.services import downsample, read_idx, split, synth_generate, tile_images
from codedvae.diagnostics.schemas import EvalConfig, GapSweep, MetricReport
from codedvae.diagnostics.services import evaluate, gap_bound_sweep
from codedvae.helpers import make_generator
from codedvae.models.exceptions import UnsupportedModelError
from codedvae.models.models import DiscreteVAE, HierCodedDVAE
from codedvae.models.schemas import ModelSpec
from codedvae.models.services import generate, reconstruct, sample_prior_messages
from codedvae.repository import ArtifactRepository
from codedvae.session import RunSession, load_manifest, sessionmanager
from codedvae.smoothing.services import draw_noise
from codedvae.training.repository import load_model
from codedvae.training.services import train
from codedvae.training.utils import build_model

logger = logging.getLogger(__name__)


def data_path(name: str) -> Path:
    """Existing or absolute paths as given, anything else under the data directory."""
    path = Path(name)
    if path.is_absolute() or path.exists():
        return path
    return Path(settings.data_dir) / path


def load_data(cfg: DataConfig) -> tuple[Dataset, Dataset]:
    """
    Load, downsample and split the configured data.

    Args:
        cfg: Data source settings.
    Returns:
        Training and test items.
    """
    if cfg.source == "idx":
        labels = data_path(cfg.labels) if cfg.labels is not None else None
        dataset = read_idx(data_path(cfg.images), labels)
    elif cfg.cache is not None and data_path(cfg.cache).exists():
        dataset = load_synthetic(data_path(cfg.cache), cfg.synthetic)
    else:
        dataset = synth_generate(cfg.synthetic)
        if cfg.cache is not None:
            save_synthetic(data_path(cfg.cache), dataset, cfg.synthetic)
    if cfg.downsample > 1:
        dataset = downsample(dataset, cfg.downsample)
    return split(dataset, cfg.n_train, cfg.n_test)


def image_shape(data_dim: int, cfg: DataConfig) -> tuple[int, int]:
    spec = cfg.synthetic
    if cfg.source == "synthetic" and cfg.downsample == 1 and spec.height * spec.width == data_dim:
        return spec.height, spec.width
    side = math.isqrt(data_dim)
    return (side, side) if side * side == data_dim else (1, data_dim)


def parse_bits(text: str, length: int) -> torch.Tensor:
    if len(text) != length or set(text) - {"0", "1"}:
        raise ConfigSyntaxError(f"expected {length} bits, got {text!r}")
    return torch.tensor([int(b) for b in text], dtype=torch.long)


def _bit_lines(bits: torch.Tensor) -> str:
    return "".join("".join(str(b) for b in row) + "\n" for row in bits.tolist())


def command_arguments(invocation: CliInvocation) -> dict[str, Any]:
    """Values of the options registered for the invocation's subcommand."""
    options = set(router.commands[invocation.subcommand].options)
    return invocation.model_dump(mode="json", include=options, exclude_none=True)


def _session(
    invocation: CliInvocation, config: ExperimentConfig
) -> AbstractContextManager[RunSession]:
    return sessionmanager.session(
        invocation.subcommand,
        config,
        config.seed,
        invocation.output,
        command_arguments(invocation),
    )


def replay_invocation(run_dir: Path | str, output: Path | str) -> CliInvocation:
    """
    Rebuild the command line of a finished run from its manifest alone.

    Args:
        run_dir: Run directory holding manifest.json.
        output: Run directory of the replay.
    Returns:
        An invocation writing the same artifacts into output.
    """
    manifest = load_manifest(run_dir)
    config = ExperimentConfig.model_validate(manifest.config)
    return CliInvocation(
        subcommand=manifest.command,
        overrides=dump_experiment(config).splitlines(),
        output=Path(output),
        **manifest.arguments,
    )


def _open_model(
    run: RunSession, invocation: CliInvocation, config: ExperimentConfig
) -> DiscreteVAE:
    checkpoint = invocation.checkpoint
    if checkpoint is None:
        checkpoint = sessionmanager.run_dir("train", config.seed) / CHECKPOINT_NAME
    run.manifest.arguments["checkpoint"] = str(Path(checkpoint).resolve())
    model, header = load_model(checkpoint)
    logger.info(f"Loaded {model.kind} model from {checkpoint} (seed {header.seed})")
    return model


@router.command("train", help="train a model, writing its run log and checkpoint")
def train_command(invocation: CliInvocation) -> int:
    config = load_experiment(invocation.config, invocation.overrides)
    train_cfg = config.train.model_copy(
        update={"checkpoint": CHECKPOINT_NAME, "runlog": RUNLOG_NAME}
    )
    with _session(invocation, config) as run:
        train_set, test_set = load_data(config.data)
        model = build_model(config.model, config.seed)
        run.path(CHECKPOINT_NAME)
        run.path(RUNLOG_NAME)
        _, log = train(model, train_set, train_cfg, config.seed, test_set, run.run_dir)
        logger.info(f"Trained {len(log)} epochs, final ELBO {log.rows[-1].elbo:.4f}")
    return 0


@router.command(
    "eval",
    help="error rates, PSNR, entropy and likelihood of a trained model",
    checkpoint={"type": Path, "help": "checkpoint file"},
    trials={"type": int, "help": "generated items for BER/WER"},
)
def eval_command(invocation: CliInvocation) -> int:
    config = load_experiment(invocation.config, invocation.overrides)
    eval_cfg = config.eval
    if invocation.trials is not None:
        update = {**eval_cfg.model_dump(), "trials": invocation.trials}
        eval_cfg = EvalConfig.model_validate(update)
    with _session(invocation, config) as run:
        model = _open_model(run, invocation, config)
        _, test_set = load_data(config.data)
        report = evaluate(model, test_set, eval_cfg, config.seed)
        metrics = ArtifactRepository(MetricReport)
        metrics.save(run.path(METRICS_JSON), report)
        metrics.append_row(run.path(METRICS_CSV), report)
    return 0


@router.command(
    "generate",
    help="decode messages drawn from the prior into an image grid",
    checkpoint={"type": Path, "help": "checkpoint file"},
    count={"type": int, "help": "items to generate"},
    fixed_m1={"type": str, "help": "bits of m1 kept fixed (hierarchical models)"},
)
def generate_command(invocation: CliInvocation) -> int:
    config = load_experiment(invocation.config, invocation.overrides)
    with _session(invocation, config) as run:
        model = _open_model(run, invocation, config)
        generator = make_generator(config.seed)
        n = invocation.count
        m = sample_prior_messages(model, (n,), generator)
        if invocation.fixed_m1 is not None:
            if not isinstance(model, HierCodedDVAE):
                raise UnsupportedModelError("--fixed-m1 needs a hierarchical model")
            m1 = parse_bits(invocation.fixed_m1, model.spec.info_len)
            rest = m.bits[:, model.spec.info_len :]
            m = BitWord(bits=torch.cat([m1.expand(n, -1), rest], dim=-1))
        noise = draw_noise((n, model.latent_dim), generator)
        x, m = generate(model, noise, m)
        height, width = image_shape(model.spec.data_dim, config.data)
        write_pgm(run.path("samples.pgm"), tile_images(x.reshape(n, height, width)))
        run.path(MESSAGES_NAME).write_text(_bit_lines(m.bits))
        run.path("codewords.txt").write_text(_bit_lines(model.codeword(m).bits))
        logger.info(f"Generated {n} items into {run.run_dir}")
    return 0


@router.command(
    "reconstruct",
    help="reconstruct test items and dump their message posteriors",
    checkpoint={"type": Path, "help": "checkpoint file"},
    count={"type": int, "help": "items to reconstruct"},
)
def reconstruct_command(invocation: CliInvocation) -> int:
    config = load_experiment(invocation.config, invocation.overrides)
    with _session(invocation, config) as run:
        model = _open_model(run, invocation, config)
        _, test_set = load_data(config.data)
        items = test_set.subset(slice(0, invocation.count)).items
        generator = make_generator(config.seed)
        noise = draw_noise((items.shape[0], model.latent_dim), generator)
        x_prime, q_m = reconstruct(model, items, noise, generator)
        height, width = image_shape(model.spec.data_dim, config.data)
        shape = (items.shape[0], height, width)
        write_pgm(run.path("originals.pgm"), tile_images(items.reshape(shape)))
        write_pgm(run.path("reconstructions.pgm"), tile_images(x_prime.reshape(shape)))
        ArtifactRepository(PosteriorDump).save(
            run.path("posterior.json"), PosteriorDump(probs=q_m.probs.tolist())
        )
    return 0


@router.command(
    "bounds-demo",
    help="check the accuracy-gap bound on an enumerable toy model",
    info_len={"flag": "--M", "type": int, "help": "message bits, at most 4"},
    samples={"type": int, "help": "draws of z per message"},
    families={"type": int, "help": "random variational families"},
)
def bounds_demo_command(invocation: CliInvocation) -> int:
    config = load_experiment(invocation.config, invocation.overrides)
    spec = ModelSpec(
        kind="coded",
        info_len=invocation.info_len,
        repeat=2,
        data_dim=DEMO_DATA_DIM,
        encoder_hidden=[DEMO_HIDDEN],
        decoder_hidden=[DEMO_HIDDEN],
        beta=config.model.beta,
    )
    config = config.model_copy(update={"model": spec})
    with _session(invocation, config) as run:
        model = build_model(spec, config.seed)
        sweep = gap_bound_sweep(
            model, invocation.families, invocation.samples, DEMO_ITEMS, config.seed
        )
        ArtifactRepository(GapSweep).save(run.path(GAP_JSON), sweep)
    return 0
