from pathlib import Path

import numpy as np
import torch

from codedvae.config import settings


def get_project_root() -> Path:
    return Path(__file__).parent


def resolve_seed(seed: int) -> int:
    """
    Apply the CODEDVAE_SEED override.

    Args:
        seed: Seed taken from the experiment configuration.
    Returns:
        The environment seed when set, the given seed otherwise.
    """
    return settings.seed if settings.seed is not None else seed


def make_generator(seed: int) -> torch.Generator:
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def make_rng(*seed: int) -> np.random.Generator:
    return np.random.default_rng(list(seed))
