import json
import math

import numpy as np
import pytest
import torch

from codedvae.coding.schemas import CodeSpec, SoftWord
from codedvae.data_io.schemas import Dataset
from codedvae.diagnostics.exceptions import (
    BlankImageError,
    EnumerationCapacityError,
    ImageShapeError,
    TrialCountError,
)
from codedvae.diagnostics.schemas import EvalConfig, GapSweep
from codedvae.diagnostics.services import (
    ber_wer,
    enumerated_log_posterior,
    evaluate,
    exact_family,
    gap_bound_check,
    gap_bound_sweep,
    generate_binary_items,
    loglik_importance,
    model_family,
    perturbed_family,
    posterior_entropy,
    psnr,
    repetition_bit_error,
    simulate_repetition_channel,
)
from codedvae.helpers import make_generator, make_rng
from codedvae.models.exceptions import DataShapeError
from codedvae.models.services import elbo
from codedvae.smoothing.services import draw_noise


class TestChannel:
    def test_binomial_tail(self):
        assert repetition_bit_error(5, 0.2) == pytest.approx(0.05792, abs=1e-10)

    @pytest.mark.parametrize("repeat", [1, 2])
    def test_short_codes_do_not_help(self, repeat):
        assert repetition_bit_error(repeat, 0.2) == pytest.approx(0.2, abs=1e-12)

    def test_simulation_matches_the_binomial_tail(self):
        report = simulate_repetition_channel(
            CodeSpec(info_len=4, repeat=5), 0.2, 100_000, make_rng(0)
        )
        assert report.expected_ber == pytest.approx(0.05792, abs=1e-10)
        assert report.expected_wer == pytest.approx(0.21232, abs=1e-5)
        assert report.ber == pytest.approx(0.05792, abs=0.005)
        assert report.wer == pytest.approx(0.21232, abs=0.01)

    def test_even_copies_break_ties_towards_zero(self):
        report = simulate_repetition_channel(
            CodeSpec(info_len=2, repeat=2), 0.1, 50_000, make_rng(1)
        )
        assert report.ber == pytest.approx(0.1, abs=0.006)

    def test_needs_trials(self):
        with pytest.raises(TrialCountError):
            simulate_repetition_channel(CodeSpec(info_len=2, repeat=3), 0.1, 0, make_rng(0))


class TestMetrics:
    def test_psnr(self):
        x = torch.tensor([[1.0, 0.0, 1.0, 0.0]], dtype=torch.float64)
        assert psnr(x, x + 0.1).item() == pytest.approx(20.0, rel=1e-12)

    def test_psnr_of_identical_images(self):
        x = torch.rand((3, 5), generator=make_generator(0), dtype=torch.float64)
        assert torch.all(torch.isinf(psnr(x, x.clone())))

    def test_psnr_is_scale_invariant(self):
        generator = make_generator(1)
        x = torch.rand((2, 6), generator=generator, dtype=torch.float64)
        x_prime = torch.rand((2, 6), generator=generator, dtype=torch.float64)
        torch.testing.assert_close(psnr(3.0 * x, 3.0 * x_prime), psnr(x, x_prime))

    def test_psnr_shape_check(self):
        with pytest.raises(ImageShapeError):
            psnr(torch.zeros((2, 4)), torch.zeros((2, 5)))

    def test_blank_reference_is_rejected(self):
        x = torch.zeros((2, 4), dtype=torch.float64)
        x[0, 1] = 1.0
        with pytest.raises(BlankImageError):
            psnr(x, torch.full_like(x, 0.5))

    def test_entropy_of_fair_bits(self):
        assert posterior_entropy(SoftWord.uniform(8)).item() == pytest.approx(8.0 * math.log(2.0))

    def test_entropy_of_a_biased_bit(self):
        q = SoftWord(probs=torch.tensor([0.1], dtype=torch.float64))
        assert posterior_entropy(q).item() == pytest.approx(0.325083, abs=1e-6)


def bitwise_chain(model, decoder_scale: float, encoder_scale: float) -> None:
    """Identity hidden layers; x_k = sigmoid(a (z_k - 1/2)), q_k = sigmoid(k (x_k - 1/2))."""
    eye = torch.eye(model.latent_dim, dtype=torch.float64)
    with torch.no_grad():
        for network, scale in ((model.decoder, decoder_scale), (model.encoder, encoder_scale)):
            hidden, output = network.layers
            hidden.weight.copy_(eye)
            hidden.bias.zero_()
            output.weight.copy_(scale * eye)
            output.bias.fill_(-scale / 2.0)


class TestErrorRates:
    @pytest.fixture
    def bitwise_model(self, make_model):
        return make_model(
            "uncoded", info_len=3, data_dim=3, encoder_hidden=[3], decoder_hidden=[3]
        )

    def test_uninformative_decoder_gives_chance_level(self, make_model, zeroed):
        model = make_model("coded")
        zeroed(model.decoder)
        report = ber_wer(model, 4000, make_generator(0))
        assert report.ber_map == pytest.approx(0.5, abs=0.03)
        assert report.ber_sampled == pytest.approx(0.5, abs=0.03)

    def test_sharp_channel_recovers_messages(self, bitwise_model):
        bitwise_chain(bitwise_model, 40.0, 40.0)
        report = ber_wer(bitwise_model, 4000, make_generator(0))
        assert report.ber_map <= 0.01
        assert report.wer_map <= 0.03

    def test_map_beats_sampling_under_a_calibrated_posterior(self, make_model):
        # beta = 1 gives p(m_k = 1 | z_k) = sigmoid(2 z_k - 1); the nearly linear
        # decoder lets the encoder invert it
        model = make_model(
            "uncoded", info_len=3, data_dim=3, encoder_hidden=[3], decoder_hidden=[3], beta=1.0
        )
        bitwise_chain(model, 0.4, 20.0)
        report = ber_wer(model, 20_000, make_generator(0))
        assert report.ber_map < report.ber_sampled < 0.5
        assert report.wer_map <= report.wer_sampled

    def test_rates(self, make_model):
        report = ber_wer(make_model("coded"), 500, make_generator(0), chunk=128)
        assert report.trials == 500
        assert report.ber_map <= report.wer_map
        assert report.ber_sampled <= report.wer_sampled
        assert report.branches is None

    def test_reproducible(self, make_model):
        model = make_model("coded")
        assert ber_wer(model, 300, make_generator(4)) == ber_wer(model, 300, make_generator(4))

    def test_hierarchical_branches(self, make_model):
        report = ber_wer(make_model("hierarchical"), 200, make_generator(0))
        assert set(report.branches) == {"m1", "m2"}
        mean_ber = (report.branches["m1"].ber_map + report.branches["m2"].ber_map) / 2.0
        assert report.ber_map == pytest.approx(mean_ber, abs=1e-12)

    def test_word_model(self, make_model):
        report = ber_wer(make_model("word"), 200, make_generator(0))
        assert 0.0 <= report.ber_sampled <= 1.0

    def test_needs_trials(self, make_model):
        with pytest.raises(TrialCountError):
            ber_wer(make_model("coded"), 0, make_generator(0))


class TestLikelihood:
    @pytest.mark.parametrize("kind", ["uncoded", "coded", "hierarchical", "word"])
    def test_effective_sample_size(self, make_model, tiny_data, kind):
        estimate = loglik_importance(make_model(kind), tiny_data.items[:20], 50, make_generator(0))
        assert estimate.ll.shape == (20,)
        assert torch.all(estimate.ess >= 1.0 - 1e-9)
        assert torch.all(estimate.ess <= 50.0 + 1e-9)

    def test_likelihood_dominates_the_elbo(self, make_model, tiny_data):
        model = make_model("uncoded")
        x = tiny_data.items
        generator = make_generator(2)
        with torch.no_grad():
            bound = elbo(model, x, draw_noise((50, len(tiny_data), model.latent_dim), generator))
        ll = loglik_importance(model, x, 300, generator).ll
        assert ll.mean().item() >= bound.value.mean().item() - 0.05


class TestGap:
    @pytest.fixture
    def model(self, make_model):
        return make_model("coded", info_len=3, repeat=2, decoder_hidden=[16])

    def test_enumerated_posterior_is_normalized(self, model):
        items, _ = generate_binary_items(model, 40, make_generator(0))
        log_post = enumerated_log_posterior(model, items, 500, make_generator(1))
        assert log_post.shape == (40, 8)
        np.testing.assert_allclose(torch.logsumexp(log_post, dim=-1).numpy(), 0.0, atol=1e-10)

    @pytest.mark.parametrize("kind, fields", [("coded", {"info_len": 5}), ("hierarchical", {})])
    def test_enumeration_capacity(self, make_model, kind, fields):
        model = make_model(kind, **fields)
        with pytest.raises(EnumerationCapacityError):
            enumerated_log_posterior(model, torch.zeros((1, 8)), 10, make_generator(0))

    def test_exact_family_has_no_gap(self, model):
        estimate = gap_bound_check(model, exact_family(), 500, 100, make_generator(0), "exact")
        assert estimate.delta == 0.0
        assert estimate.kl_hat == pytest.approx(0.0, abs=1e-12)
        assert not estimate.violated

    def test_families_are_normalized(self, model):
        items, _ = generate_binary_items(model, 10, make_generator(0))
        log_post = enumerated_log_posterior(model, items, 200, make_generator(1))
        for family in (model_family(model), perturbed_family(8, make_generator(3))):
            log_q = family(items, log_post)
            np.testing.assert_allclose(
                torch.logsumexp(log_q, dim=-1).numpy(), 0.0, atol=1e-6
            )

    def test_word_model_family(self, make_model):
        model = make_model("word")
        items, _ = generate_binary_items(model, 10, make_generator(0))
        log_q = model_family(model)(items, None)
        assert log_q.shape == (10, 8)

    def test_sweep_finds_no_violation(self, model):
        sweep = gap_bound_sweep(model, n_families=50, mc_samples=2000, n_items=300, seed=1)
        assert len(sweep.estimates) == 52
        assert [e.family for e in sweep.estimates[:2]] == ["exact", "model"]
        assert sweep.violations == 0
        assert all(e.delta <= e.bound + e.slack for e in sweep.estimates)

    def test_sweep_reports_violations_when_serialized(self, model):
        sweep = gap_bound_sweep(model, n_families=2, mc_samples=200, n_items=50, seed=0)
        record = json.loads(sweep.model_dump_json())
        assert record["violations"] == 0
        del record["violations"]
        assert GapSweep.model_validate(record) == sweep


class TestEvaluate:
    @pytest.fixture
    def cfg(self) -> EvalConfig:
        return EvalConfig(trials=200, ll_samples=20, batch_size=16, trial_chunk=64, n_items=40)

    @pytest.mark.parametrize("kind", ["coded", "word"])
    def test_report(self, make_model, tiny_data, cfg, kind):
        report = evaluate(make_model(kind), tiny_data, cfg, seed=3)
        assert 0.0 <= report.ber <= 1.0
        assert math.isfinite(report.ll_mean)
        assert report.entropy_mean <= 3.0 * math.log(2.0) + 1e-9

    def test_reproducible(self, make_model, tiny_data, cfg):
        model = make_model("coded")
        assert evaluate(model, tiny_data, cfg, seed=3) == evaluate(model, tiny_data, cfg, seed=3)

    def test_item_size_is_checked(self, make_model, cfg):
        data = Dataset(items=torch.zeros((4, 4), dtype=torch.float64), height=2, width=2)
        with pytest.raises(DataShapeError):
            evaluate(make_model("coded"), data, cfg)

    def test_blank_items_are_left_out_of_the_psnr_mean(self, make_model, tiny_data, cfg):
        items = tiny_data.items.clone()
        items[0] = 0.0
        data = Dataset(items=items, height=tiny_data.height, width=tiny_data.width)
        report = evaluate(make_model("coded"), data, cfg, seed=3)
        assert math.isfinite(report.psnr_mean)

    def test_all_blank_items_are_rejected(self, make_model, tiny_data, cfg):
        data = Dataset(
            items=torch.zeros_like(tiny_data.items), height=tiny_data.height, width=tiny_data.width
        )
        with pytest.raises(BlankImageError):
            evaluate(make_model("coded"), data, cfg)
