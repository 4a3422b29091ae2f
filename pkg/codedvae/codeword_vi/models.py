import math

import torch

from codedvae.codeword_vi.services import (
    categorical_posterior,
    codeword_message_posterior,
    sample_codeword,
)
from codedvae.coding.schemas import BitWord, CodeSpec, Codebook, SoftWord
from codedvae.coding.services import enumerate_codebook, message_index, random_codebook
from codedvae.models.exceptions import UnsupportedModelError
from codedvae.models.models import DiscreteVAE
from codedvae.models.schemas import ModelSpec, Posterior
from codedvae.smoothing.schemas import NoiseDraw
from codedvae.smoothing.services import conditional_inverse_cdf, conditional_log_pdf


def build_codebook(spec: ModelSpec) -> Codebook:
    if spec.codebook == "random":
        return random_codebook(spec.info_len, spec.code_len, spec.codebook_seed)
    return enumerate_codebook(CodeSpec(info_len=spec.info_len, repeat=spec.repeat))


class CodewordDVAE(DiscreteVAE):
    """
    Model with a categorical posterior over the words of an explicit codebook.

    The encoder scores the D positions; the posterior renormalizes those
    scores over valid codewords only.

    Attributes:
        book: Codebook, message i maps to word i.
    """

    kind = "word"
    factorized = False

    def __init__(self, spec: ModelSpec, generator: torch.Generator | None = None):
        book = build_codebook(spec)
        super().__init__(spec, book.code_len, generator)
        self.book = book

    def posterior(self, x: torch.Tensor) -> Posterior:
        raise UnsupportedModelError("Codeword-level posteriors are not factorized")

    def message_probs(self, x: torch.Tensor) -> SoftWord:
        return codeword_message_posterior(categorical_posterior(self.encode(x), self.book))

    def sample_latent(
        self, x: torch.Tensor, noise: NoiseDraw, generator: torch.Generator | None = None
    ) -> torch.Tensor:
        post = categorical_posterior(self.encode(x), self.book)
        _, words = sample_codeword(post, generator)
        return conditional_inverse_cdf(words.bits[0], noise.rho, self.smoothing)

    def codeword(self, m: BitWord) -> BitWord:
        return BitWord(bits=self.book.words[message_index(m)])

    def prior_z_logpdf(self, z: torch.Tensor) -> torch.Tensor:
        per_word = conditional_log_pdf(z.unsqueeze(-2), self.book.words, self.smoothing)
        return torch.logsumexp(per_word.sum(dim=-1), dim=-1) - math.log(len(self.book))
