import math

import numpy as np
import pytest
import torch

from codedvae.coding.exceptions import LengthMismatchError
from codedvae.coding.schemas import BitWord, SoftWord
from codedvae.coding.services import hard_encode
from codedvae.diffcore.services import finite_diff_check
from codedvae.helpers import make_generator
from codedvae.models.exceptions import DataShapeError, SampleCountError, UnsupportedModelError
from codedvae.models.schemas import PriorSpec
from codedvae.models.services import (
    elbo,
    elbo_hier,
    encoder_posterior,
    generate,
    importance_log_weights,
    infer_coded,
    iwae_bound,
    kl_bernoulli,
    marginal_z_logpdf,
    message_posterior,
    reconstruct,
    sample_prior_messages,
)
from codedvae.smoothing.schemas import SmoothingParams
from codedvae.smoothing.services import conditional_log_pdf, draw_noise, mixture_pdf


@pytest.fixture
def items() -> torch.Tensor:
    return torch.rand((4, 8), generator=make_generator(1), dtype=torch.float64)


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


class TestPosterior:
    def test_zero_encoder_is_uninformative(self, make_model, zeroed, items):
        model = make_model("coded")
        zeroed(model.encoder)
        np.testing.assert_allclose(encoder_posterior(model, items).probs.numpy(), 0.5)

    @pytest.mark.parametrize("kind, width", [("uncoded", 3), ("coded", 6), ("hierarchical", 12)])
    def test_output_width(self, make_model, items, kind, width):
        assert len(encoder_posterior(make_model(kind), items)) == width

    def test_probabilities_are_clamped(self, make_model, items):
        q = encoder_posterior(make_model("coded"), 100.0 * items)
        assert torch.all(q.probs >= 1e-7) and torch.all(q.probs <= 1.0 - 1e-7)

    def test_wrong_item_size(self, make_model):
        with pytest.raises(DataShapeError):
            encoder_posterior(make_model("coded"), torch.zeros((2, 5), dtype=torch.float64))

    def test_uniform_chain(self, make_model, zeroed, items):
        model = make_model("coded")
        zeroed(model.encoder)
        q_m, q_c = infer_coded(model, items)
        np.testing.assert_allclose(q_m.probs.numpy(), 0.5)
        np.testing.assert_allclose(q_c.probs.numpy(), 0.5)

    def test_soft_decode_then_repeat(self, make_model, zeroed, items):
        model = make_model("coded")
        zeroed(model.encoder)
        with torch.no_grad():
            model.encoder.layers[-1].bias.copy_(
                torch.tensor([logit(0.9), logit(0.8)] * 3, dtype=torch.float64)
            )
        q_m, q_c = infer_coded(model, items)
        np.testing.assert_allclose(q_m.probs.numpy(), 0.72 / 0.74, rtol=1e-9)
        np.testing.assert_allclose(q_c.probs.numpy(), 0.72 / 0.74, rtol=1e-9)
        assert q_c.probs.shape == (4, 6)

    def test_hard_chain_recovers_message(self, make_model, zeroed, items):
        model = make_model("coded")
        zeroed(model.encoder)
        codeword = hard_encode(model.code, BitWord(bits=[1, 0, 1])).bits.to(torch.float64)
        with torch.no_grad():
            model.encoder.layers[-1].bias.copy_(40.0 * (2.0 * codeword - 1.0))
        q_m, q_c = infer_coded(model, items)
        assert q_m.probs[0].round().tolist() == [1.0, 0.0, 1.0]
        assert q_c.probs[0].round().tolist() == codeword.tolist()

    def test_infer_coded_needs_coded_model(self, make_model, items):
        with pytest.raises(UnsupportedModelError):
            infer_coded(make_model("uncoded"), items)

    def test_hierarchical_message_posterior_concatenates_branches(self, make_model, items):
        assert message_posterior(make_model("hierarchical"), items).probs.shape == (4, 6)


class TestKL:
    def test_zero_at_prior(self):
        assert kl_bernoulli(SoftWord.uniform(5, 0.3), PriorSpec(nu=0.3)).item() == pytest.approx(
            0.0, abs=1e-12
        )

    def test_certain_bit_against_fair_prior(self):
        kl = kl_bernoulli(SoftWord(probs=torch.ones(1, dtype=torch.float64)), PriorSpec())
        assert kl.item() == pytest.approx(math.log(2.0), abs=1e-5)

    def test_non_negative(self):
        q = SoftWord(probs=torch.rand((50, 4), generator=make_generator(2), dtype=torch.float64))
        assert torch.all(kl_bernoulli(q, PriorSpec()) >= 0.0)

    def test_matches_monte_carlo(self):
        q = SoftWord(probs=torch.tensor([0.3, 0.8, 0.55], dtype=torch.float64))
        prior = PriorSpec(nu=0.4)
        bits = (torch.rand((1_000_000, 3), generator=make_generator(3), dtype=torch.float64)
                < q.probs).to(torch.float64)
        log_q = (bits * q.log_p1 + (1.0 - bits) * q.log_p0).sum(dim=-1)
        log_p = (bits * math.log(0.4) + (1.0 - bits) * math.log(0.6)).sum(dim=-1)
        ratio = log_q - log_p
        stderr = ratio.std().item() / 1000.0
        assert abs(ratio.mean().item() - kl_bernoulli(q, prior).item()) < 4.0 * stderr


class TestElbo:
    def test_kl_vanishes_at_prior(self, make_model, zeroed, items, generator):
        model = make_model("coded")
        zeroed(model.encoder)
        terms = elbo(model, items, draw_noise((4, model.latent_dim), generator))
        np.testing.assert_allclose(terms.kl1.detach().numpy(), 0.0, atol=1e-12)
        torch.testing.assert_close(terms.value, terms.recon)

    def test_kl_is_taken_over_messages(self, make_model, items, generator):
        model = make_model("coded", repeat=3)
        q_m, q_c = infer_coded(model, items)
        terms = elbo(model, items, draw_noise((4, model.latent_dim), generator))
        torch.testing.assert_close(terms.kl1, kl_bernoulli(q_m, model.prior))
        assert not torch.allclose(terms.kl1, kl_bernoulli(q_c, model.prior))

    def test_deterministic_given_noise(self, make_model, items, generator):
        model = make_model("coded")
        noise = draw_noise((4, model.latent_dim), generator)
        assert torch.equal(elbo(model, items, noise).value, elbo(model, items, noise).value)

    def test_noise_length_checked(self, make_model, items, generator):
        model = make_model("coded")
        with pytest.raises(LengthMismatchError):
            elbo(model, items, draw_noise((4, 3), generator))

    def test_word_models_are_not_factorized(self, make_model, items, generator):
        model = make_model("word")
        with pytest.raises(UnsupportedModelError):
            elbo(model, items, draw_noise((4, model.latent_dim), generator))

    @pytest.mark.parametrize("kind", ["uncoded", "coded"])
    def test_gradient_matches_finite_differences(self, make_model, items, kind):
        model = make_model(kind, encoder_hidden=[5], decoder_hidden=[5])
        noise = draw_noise((4, model.latent_dim), make_generator(4))

        def loss() -> torch.Tensor:
            return -elbo(model, items, noise).value.sum()

        report = finite_diff_check(loss, model, tol=1e-4, abs_floor=1e-4)
        assert report.passed, report.per_param

    def test_hierarchical_gradient_matches_finite_differences(self, make_model, items):
        model = make_model("hierarchical", info_len=2, encoder_hidden=[5], decoder_hidden=[5])
        noise = draw_noise((4, model.latent_dim), make_generator(5))

        def loss() -> torch.Tensor:
            return -elbo_hier(model, items, noise).value.sum()

        report = finite_diff_check(loss, model, tol=1e-4, abs_floor=1e-4)
        assert report.passed, report.per_param

    def test_hierarchical_kls_vanish_at_prior(self, make_model, zeroed, items, generator):
        model = make_model("hierarchical")
        zeroed(model.encoder)
        terms = elbo_hier(model, items, draw_noise((4, model.latent_dim), generator))
        np.testing.assert_allclose(terms.kl1.detach().numpy(), 0.0, atol=1e-12)
        np.testing.assert_allclose(terms.kl2.detach().numpy(), 0.0, atol=1e-12)

    def test_hierarchical_reports_both_kls(self, make_model, items, generator):
        model = make_model("hierarchical")
        terms = elbo_hier(model, items, draw_noise((4, model.latent_dim), generator))
        assert terms.kl2 is not None
        torch.testing.assert_close(terms.value, terms.recon - terms.kl1 - terms.kl2)

    def test_elbo_hier_needs_hierarchical_model(self, make_model, items, generator):
        with pytest.raises(UnsupportedModelError):
            elbo_hier(make_model("coded"), items, draw_noise((4, 6), generator))


class TestMarginal:
    P = SmoothingParams()

    def test_certain_posterior(self):
        z = torch.tensor([0.6, 0.7, 0.95], dtype=torch.float64)
        expected = conditional_log_pdf(z, 1, self.P).sum()
        value = marginal_z_logpdf(SoftWord.uniform(3, 1.0), z, self.P)
        assert value.item() == pytest.approx(expected.item(), abs=1e-5)

    def test_symmetric_point(self):
        z = torch.full((3,), 0.5, dtype=torch.float64)
        density = mixture_pdf(torch.tensor(0.5, dtype=torch.float64), z[0], self.P)
        value = marginal_z_logpdf(SoftWord.uniform(3), z, self.P)
        assert value.item() == pytest.approx(3.0 * math.log(density.item()), rel=1e-12)
        assert value.item() == pytest.approx(3.0 * (-7.5 - math.log(self.P.z_norm)), rel=1e-12)


class TestImportance:
    def test_k_must_be_positive(self, make_model, items, generator):
        model = make_model("coded")
        with pytest.raises(SampleCountError):
            iwae_bound(model, items, 0, draw_noise((1, 4, 6), generator))

    def test_noise_count_must_match_k(self, make_model, items, generator):
        model = make_model("coded")
        with pytest.raises(SampleCountError):
            iwae_bound(model, items, 3, draw_noise((2, 4, 6), generator))

    def test_single_draw_is_its_log_weight(self, make_model, items, generator):
        model = make_model("coded")
        noise = draw_noise((1, 4, 6), generator)
        torch.testing.assert_close(
            iwae_bound(model, items, 1, noise), importance_log_weights(model, items, noise)[0]
        )

    def test_more_samples_do_not_lower_the_bound(self, make_model):
        model = make_model("uncoded")
        x = torch.rand((400, 8), generator=make_generator(6), dtype=torch.float64)
        generator = make_generator(7)
        with torch.no_grad():
            one = iwae_bound(model, x, 1, draw_noise((1, 400, 3), generator))
            ten = iwae_bound(model, x, 10, draw_noise((10, 400, 3), generator))
        gain = ten - one
        stderr = gain.std().item() / math.sqrt(400)
        assert gain.mean().item() >= -3.0 * stderr


class TestGeneration:
    def test_shape_and_range(self, make_model, generator):
        model = make_model("coded")
        x, m = generate(model, draw_noise((5, 6), generator), generator=generator)
        assert x.shape == (5, 8)
        assert torch.all(x > 0.0) and torch.all(x < 1.0)
        assert m.bits.shape == (5, 3)

    def test_deterministic(self, make_model):
        model = make_model("coded")
        m = BitWord(bits=[[1, 0, 1], [0, 0, 1]])
        noise = draw_noise((2, 6), make_generator(3))
        assert torch.equal(generate(model, noise, m)[0], generate(model, noise, m)[0])

    def test_message_length_checked(self, make_model, generator):
        with pytest.raises(LengthMismatchError):
            generate(make_model("coded"), draw_noise((2, 6), generator), BitWord(bits=[1, 0]))

    def test_prior_messages_are_balanced(self, make_model, generator):
        m = sample_prior_messages(make_model("coded"), (20_000,), generator)
        assert m.bits.to(torch.float64).mean().item() == pytest.approx(0.5, abs=0.01)

    def test_untrained_reconstruction_is_flat(self, make_model, zeroed, items, generator):
        model = make_model("coded")
        zeroed(model.decoder)
        x_prime, q_m = reconstruct(model, items, draw_noise((4, 6), generator))
        np.testing.assert_allclose(x_prime.numpy(), 0.5)
        assert q_m.probs.shape == (4, 3)

    def test_reconstruction_shape(self, make_model, items, generator):
        model = make_model("hierarchical")
        x_prime, q_m = reconstruct(model, items, draw_noise((4, 12), generator))
        assert x_prime.shape == items.shape
        assert q_m.probs.shape == (4, 6)
