import logging
import math

import torch
from torch import nn

from codedvae.coding.schemas import BitWord, CodeSpec, SoftWord
from codedvae.coding.services import (
    hard_encode,
    posterior_xor_recombine,
    posterior_xor_residual,
    soft_decode,
    soft_encode,
    xor_combine,
)
from codedvae.diffcore.models import MultilayerPerceptron
from codedvae.diffcore.schemas import NetworkPlan
from codedvae.models.exceptions import DataShapeError
from codedvae.models.schemas import LikelihoodSpec, ModelSpec, Posterior, PriorSpec
from codedvae.smoothing.schemas import NoiseDraw, SmoothingParams
from codedvae.smoothing.services import conditional_log_pdf, mixture_log_pdf, sample_smoothed

logger = logging.getLogger(__name__)


def block_log_pdfs(
    z: torch.Tensor, code: CodeSpec, p: SmoothingParams
) -> tuple[torch.Tensor, torch.Tensor]:
    """
    Log density of each block of L copies given its information bit.

    Args:
        z: Relaxed latents of one code, shape (..., D).
        code: The repetition code.
        p: Smoothing parameters.
    Returns:
        (log p(z_block|0), log p(z_block|1)), each of shape (..., M).
    """
    grouped = (*z.shape[:-1], code.info_len, code.repeat)
    log_zero = conditional_log_pdf(z, 0, p).reshape(grouped).sum(dim=-1)
    log_one = conditional_log_pdf(z, 1, p).reshape(grouped).sum(dim=-1)
    return log_zero, log_one


class DiscreteVAE(nn.Module):
    """
    Binary-latent variational autoencoder with an MLP encoder and decoder.

    The encoder ends in a logistic layer emitting one probability per latent
    position; the decoder emits logits whose sigmoid is the Bernoulli mean.
    Subclasses decide how encoder outputs become message posteriors and how
    messages become latent bits.

    Attributes:
        spec: Architecture record.
        prior: Prior over each message bit.
        smoothing: Smoothing of each latent bit.
        likelihood: Observation model.
        encoder: Network x -> per-position probabilities.
        decoder: Network z -> logits.
    """

    kind = "uncoded"
    factorized = True

    def __init__(self, spec: ModelSpec, latent_dim: int, generator: torch.Generator | None = None):
        super().__init__()
        self.spec = spec
        self.latent_dim = latent_dim
        self.prior = PriorSpec(nu=spec.nu)
        self.smoothing = SmoothingParams(beta=spec.beta)
        self.likelihood = LikelihoodSpec()
        # encoder first, so equal generators give equal encoders across kinds
        self.encoder = MultilayerPerceptron(
            NetworkPlan(sizes=[spec.data_dim, *spec.encoder_hidden, latent_dim], output="logistic"),
            generator,
        )
        self.decoder = MultilayerPerceptron(
            NetworkPlan(sizes=[latent_dim, *spec.decoder_hidden, spec.data_dim]),
            generator,
        )

    @property
    def message_len(self) -> int:
        return self.spec.info_len

    def check_items(self, x: torch.Tensor) -> None:
        if x.shape[-1] != self.spec.data_dim:
            logger.error("Item size does not match the model", exc_info=False)
            raise DataShapeError(
                f"Expected items of size {self.spec.data_dim}, got {x.shape[-1]}"
            )

    def encode(self, x: torch.Tensor) -> SoftWord:
        self.check_items(x)
        return SoftWord(probs=self.encoder(x))

    def posterior(self, x: torch.Tensor) -> Posterior:
        q = self.encode(x)
        return Posterior(q_m=q, q_c=q, branches=[q])

    def message_probs(self, x: torch.Tensor) -> SoftWord:
        return self.posterior(x).q_m

    def sample_latent(
        self, x: torch.Tensor, noise: NoiseDraw, generator: torch.Generator | None = None
    ) -> torch.Tensor:
        """
        Draw z from the posterior of x.

        Args:
            x: Items.
            noise: Uniform draws, one per latent position.
            generator: Unused by factorized posteriors.
        Returns:
            Relaxed latents.
        """
        return sample_smoothed(self.posterior(x).q_c, noise, self.smoothing)

    def codeword(self, m: BitWord) -> BitWord:
        return m

    def prior_z_logpdf(self, z: torch.Tensor) -> torch.Tensor:
        probs = torch.full_like(z, self.prior.nu)
        return mixture_log_pdf(probs, z, self.smoothing).sum(dim=-1)

    def decode_logits(self, z: torch.Tensor) -> torch.Tensor:
        return self.decoder(z)

    def decode_mean(self, z: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.decoder(z))

    def architecture(self) -> dict:
        return self.spec.model_dump()


class UncodedDVAE(DiscreteVAE):
    """Latent bits are the message bits."""

    kind = "uncoded"

    def __init__(self, spec: ModelSpec, generator: torch.Generator | None = None):
        super().__init__(spec, spec.info_len, generator)


class CodedDVAE(DiscreteVAE):
    """
    Latent bits are a repetition codeword of the message.

    The encoder scores all D coded positions; soft decoding aggregates them
    into q(m|x) and soft encoding repeats q(m|x) back onto the codeword.

    Attributes:
        code: The repetition code.
    """

    kind = "coded"

    def __init__(self, spec: ModelSpec, generator: torch.Generator | None = None):
        code = CodeSpec(info_len=spec.info_len, repeat=spec.repeat)
        super().__init__(spec, code.code_len, generator)
        self.code = code

    def posterior(self, x: torch.Tensor) -> Posterior:
        q_u = self.encode(x)
        q_m = soft_decode(self.code, q_u)
        return Posterior(q_m=q_m, q_c=soft_encode(self.code, q_m), branches=[q_m])

    def codeword(self, m: BitWord) -> BitWord:
        return hard_encode(self.code, m)

    def prior_z_logpdf(self, z: torch.Tensor) -> torch.Tensor:
        log_zero, log_one = block_log_pdfs(z, self.code, self.smoothing)
        nu = self.prior.nu
        mixed = torch.logaddexp(math.log1p(-nu) + log_zero, math.log(nu) + log_one)
        return mixed.sum(dim=-1)


class HierCodedDVAE(DiscreteVAE):
    """
    Two-branch model: branch 1 carries m1, branch 2 carries m1 xor m2.

    Messages are handled as the concatenation (m1, m2) of length 2M and the
    latent as (z1, z2) of length D1 + D2.

    Attributes:
        code1: Repetition code of branch 1.
        code2: Repetition code of branch 2.
    """

    kind = "hierarchical"

    def __init__(self, spec: ModelSpec, generator: torch.Generator | None = None):
        code1 = CodeSpec(info_len=spec.info_len, repeat=spec.repeat)
        code2 = CodeSpec(info_len=spec.info_len, repeat=spec.branch2_repeat)
        super().__init__(spec, code1.code_len + code2.code_len, generator)
        self.code1 = code1
        self.code2 = code2

    @property
    def message_len(self) -> int:
        return 2 * self.spec.info_len

    def split_latent(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        z1, z2 = z.split([self.code1.code_len, self.code2.code_len], dim=-1)
        return z1, z2

    def posterior(self, x: torch.Tensor) -> Posterior:
        q_u1, q_u2 = self.encode(x).split([self.code1.code_len, self.code2.code_len])
        q_m1 = soft_decode(self.code1, q_u1)
        q_m12 = soft_decode(self.code2, q_u2)
        q_m2 = posterior_xor_residual(q_m12, q_m1)
        # branch 2 is sampled from the recombined posterior
        q_m12_prime = posterior_xor_recombine(q_m1, q_m2)
        q_c = SoftWord.concat(
            [soft_encode(self.code1, q_m1), soft_encode(self.code2, q_m12_prime)]
        )
        return Posterior(q_m=SoftWord.concat([q_m1, q_m2]), q_c=q_c, branches=[q_m1, q_m2])

    def codeword(self, m: BitWord) -> BitWord:
        m1, m2 = m.bits.split([self.spec.info_len, self.spec.info_len], dim=-1)
        m1, m2 = BitWord(bits=m1), BitWord(bits=m2)
        c1 = hard_encode(self.code1, m1)
        c2 = hard_encode(self.code2, xor_combine(m1, m2))
        return BitWord(bits=torch.cat([c1.bits, c2.bits], dim=-1))

    def prior_z_logpdf(self, z: torch.Tensor) -> torch.Tensor:
        z1, z2 = self.split_latent(z)
        first = block_log_pdfs(z1, self.code1, self.smoothing)
        second = block_log_pdfs(z2, self.code2, self.smoothing)
        nu = self.prior.nu
        log_bit = (math.log1p(-nu), math.log(nu))
        # joint over (m1_k, m2_k); branch 2 sees m1_k xor m2_k
        terms = [
            log_bit[a] + log_bit[b] + first[a] + second[a ^ b]
            for a in (0, 1)
            for b in (0, 1)
        ]
        return torch.logsumexp(torch.stack(terms), dim=0).sum(dim=-1)


MODEL_CLASSES: dict[str, type[DiscreteVAE]] = {
    "uncoded": UncodedDVAE,
    "coded": CodedDVAE,
    "hierarchical": HierCodedDVAE,
}
