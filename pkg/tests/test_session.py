import pytest

from codedvae import __version__
from codedvae.cli.schemas import ExperimentConfig
from codedvae.exceptions import NumericError
from codedvae.session import RunSessionManager, load_manifest


@pytest.fixture
def manager(tmp_path) -> RunSessionManager:
    return RunSessionManager(tmp_path / "runs")


def test_run_directory_names(manager, tmp_path):
    assert manager.run_dir("train", 3) == tmp_path / "runs" / "train-seed3"
    assert manager.run_dir("train", 3, tmp_path / "custom") == tmp_path / "custom"


def test_completed_session(manager):
    config = ExperimentConfig(seed=2)
    with manager.session("eval", config, 2) as run:
        assert load_manifest(run.run_dir).status == "running"
        run.path("metrics.json").write_text("{}")
        run.path("metrics.json")
    manifest = load_manifest(run.run_dir)
    assert manifest.status == "completed"
    assert manifest.artifacts == ["metrics.json"]
    assert manifest.version == __version__
    assert manifest.config == config.model_dump(mode="json")


def test_failed_session(manager):
    with pytest.raises(NumericError):
        with manager.session("train", ExperimentConfig(), 0) as run:
            raise NumericError("diverged")
    assert load_manifest(run.run_dir).status == "failed"


def test_session_records_arguments(manager):
    with manager.session("generate", ExperimentConfig(), 0, arguments={"count": 5}) as run:
        run.manifest.arguments["checkpoint"] = "model.pt"
    assert load_manifest(run.run_dir).arguments == {"count": 5, "checkpoint": "model.pt"}
