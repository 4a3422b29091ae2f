import logging

from codedvae.codeword_vi.models import CodewordDVAE
from codedvae.helpers import make_generator
from codedvae.models.models import MODEL_CLASSES, DiscreteVAE
from codedvae.models.schemas import ModelSpec

logger = logging.getLogger(__name__)


def build_model(spec: ModelSpec, seed: int) -> DiscreteVAE:
    """
    Instantiate a model with seeded initial parameters.

    Args:
        spec: Architecture.
        seed: Seed of the initialization.
    Returns:
        The model; equal (spec, seed) pairs give equal parameters.
    """
    classes = {**MODEL_CLASSES, "word": CodewordDVAE}
    model = classes[spec.kind](spec, make_generator(seed))
    logger.debug(f"Built {spec.kind} model with {model.latent_dim} latent positions")
    return model
