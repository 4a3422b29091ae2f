import math

import pytest
import torch

from codedvae.data_io.schemas import Dataset
from codedvae.exceptions import NumericError
from codedvae.models.exceptions import DataShapeError
from codedvae.training.exceptions import GradientShapeError, ObjectiveError
from codedvae.training.models import AdamState
from codedvae.training.repository import RunLogRepository, load_model
from codedvae.training.schemas import TrainConfig
from codedvae.training.services import adam_step, heldout_elbo, train, train_coded


@pytest.fixture
def cfg() -> TrainConfig:
    return TrainConfig(epochs=2, batch_size=16, learning_rate=1e-2, samples=4)


def snapshot(model) -> dict[str, torch.Tensor]:
    return {name: p.detach().clone() for name, p in model.named_parameters()}


def assert_same_parameters(first, second, atol: float = 0.0) -> None:
    for (name, a), (_, b) in zip(first.named_parameters(), second.named_parameters()):
        torch.testing.assert_close(a, b, atol=atol, rtol=0.0, msg=name)


class TestAdam:
    @pytest.fixture
    def params(self) -> dict[str, torch.Tensor]:
        return {"w": torch.tensor([1.0, -2.0, 0.5], dtype=torch.float64)}

    def test_zero_gradient_is_a_no_op(self, params):
        before = params["w"].clone()
        adam_step(params, {"w": torch.zeros(3, dtype=torch.float64)}, AdamState(), 0.1)
        assert torch.equal(params["w"], before)

    def test_first_step_moves_by_the_learning_rate(self, params):
        before = params["w"].clone()
        grads = {"w": torch.tensor([3.0, -0.2, 1.0], dtype=torch.float64)}
        state = adam_step(params, grads, AdamState(), 0.01)
        torch.testing.assert_close(
            params["w"] - before, torch.tensor([-0.01, 0.01, -0.01], dtype=torch.float64)
        )
        assert state.t == 1

    def test_non_finite_gradient_is_rejected(self, params):
        before = params["w"].clone()
        grads = {"w": torch.tensor([1.0, math.nan, 0.0], dtype=torch.float64)}
        state = adam_step(params, grads, AdamState(), 0.1)
        assert torch.equal(params["w"], before)
        assert state.rejected == 1 and state.t == 0

    def test_gradient_shape_is_checked(self, params):
        with pytest.raises(GradientShapeError):
            adam_step(params, {"w": torch.zeros(2, dtype=torch.float64)}, AdamState(), 0.1)

    def test_missing_gradient(self, params):
        with pytest.raises(GradientShapeError):
            adam_step(params, {}, AdamState(), 0.1)


class TestTrain:
    def test_log_has_a_row_per_epoch(self, make_model, tiny_data, cfg):
        _, log = train(make_model("coded"), tiny_data, cfg)
        assert [row.epoch for row in log.rows] == [1, 2]
        assert not log.stopped_early
        assert all(row.kl2 is None for row in log.rows)

    def test_equal_seeds_give_equal_models(self, make_model, tiny_data, cfg):
        first, _ = train(make_model("coded"), tiny_data, cfg, seed=3)
        second, _ = train(make_model("coded"), tiny_data, cfg, seed=3)
        assert_same_parameters(first, second)

    def test_zero_learning_rate_keeps_parameters(self, make_model, tiny_data, cfg):
        model = make_model("coded")
        before = snapshot(model)
        train(model, tiny_data, cfg.model_copy(update={"learning_rate": 0.0}))
        for name, p in model.named_parameters():
            assert torch.equal(p, before[name])

    def test_training_improves_the_heldout_elbo(self, make_model, tiny_data):
        cfg = TrainConfig(epochs=10, batch_size=16, learning_rate=1e-2)
        model = make_model("coded")
        start = heldout_elbo(model, tiny_data, cfg, seed=99)
        train(model, tiny_data, cfg)
        assert heldout_elbo(model, tiny_data, cfg, seed=99) > start

    def test_single_copy_code_matches_uncoded(self, make_model, tiny_data, cfg):
        cfg = cfg.model_copy(update={"epochs": 10})
        coded, coded_log = train(make_model("coded", repeat=1), tiny_data, cfg, seed=1)
        uncoded, uncoded_log = train(make_model("uncoded"), tiny_data, cfg, seed=1)
        assert_same_parameters(coded, uncoded)
        assert len(coded_log) == len(uncoded_log) == 10
        for coded_row, uncoded_row in zip(coded_log.rows, uncoded_log.rows):
            assert coded_row.model_dump(exclude={"seconds"}) == uncoded_row.model_dump(
                exclude={"seconds"}
            )

    def test_hierarchical_logs_both_kls(self, make_model, tiny_data, cfg):
        _, log = train(make_model("hierarchical"), tiny_data, cfg)
        assert all(row.kl2 is not None and row.kl2 >= 0.0 for row in log.rows)

    def test_word_model(self, make_model, tiny_data, cfg):
        _, log = train(make_model("word"), tiny_data, cfg)
        assert len(log) == 2
        assert all(math.isfinite(row.elbo) for row in log.rows)

    def test_iwae_objective(self, make_model, tiny_data, cfg):
        _, log = train(make_model("coded"), tiny_data, cfg.model_copy(update={"objective": "iwae"}))
        assert len(log) == 2

    def test_word_models_train_on_the_elbo_only(self, make_model, tiny_data, cfg):
        with pytest.raises(ObjectiveError):
            train(make_model("word"), tiny_data, cfg.model_copy(update={"objective": "iwae"}))

    def test_trainer_checks_the_model_kind(self, make_model, tiny_data, cfg):
        with pytest.raises(ObjectiveError):
            train_coded(make_model("uncoded"), tiny_data, cfg)

    def test_item_size_is_checked(self, make_model, cfg):
        data = Dataset(items=torch.full((4, 4), 0.5, dtype=torch.float64), height=2, width=2)
        with pytest.raises(DataShapeError):
            train(make_model("coded"), data, cfg)

    def test_non_finite_parameters_abort(self, make_model, tiny_data, cfg):
        model = make_model("coded")
        with torch.no_grad():
            model.encoder.layers[0].weight[0, 0] = math.nan
        with pytest.raises(NumericError):
            train(model, tiny_data, cfg)

    def test_heldout_elbo_is_logged_with_patience(self, make_model, tiny_data, cfg):
        cfg = cfg.model_copy(update={"patience": 5})
        _, log = train(make_model("coded"), tiny_data, cfg, heldout=tiny_data)
        assert all(row.heldout_elbo is not None for row in log.rows)

    def test_stalled_heldout_elbo_stops_early(self, make_model, tiny_data):
        cfg = TrainConfig(epochs=20, batch_size=32, learning_rate=0.0, patience=1)
        _, log = train(make_model("coded"), tiny_data, cfg, heldout=tiny_data)
        assert log.stopped_early
        assert len(log) < 20

    def test_run_directory_receives_artifacts(self, make_model, tiny_data, cfg, tmp_path):
        model, log = train(make_model("hierarchical"), tiny_data, cfg, seed=2, run_dir=tmp_path)
        restored, header = load_model(tmp_path / cfg.checkpoint)
        assert header.seed == 2
        assert_same_parameters(model, restored)
        assert len(RunLogRepository().read(tmp_path / cfg.runlog)) == len(log)
