import pytest
import torch

from codedvae.diffcore.exceptions import CheckpointError
from codedvae.diffcore.models import MultilayerPerceptron
from codedvae.diffcore.repository import CheckpointRepository, load_checkpoint, save_checkpoint
from codedvae.diffcore.schemas import CheckpointHeader, NetworkPlan
from codedvae.helpers import make_generator


@pytest.fixture
def network() -> MultilayerPerceptron:
    return MultilayerPerceptron(NetworkPlan(sizes=[3, 4, 2]), make_generator(0))


@pytest.fixture
def header() -> CheckpointHeader:
    return CheckpointHeader(architecture={"sizes": [3, 4, 2]}, seed=7)


def test_round_trip(tmp_path, network, header):
    path = save_checkpoint(tmp_path / "nested" / "net.pt", network, header)
    loaded_header, tensors = load_checkpoint(path)
    assert loaded_header == header
    for name, value in network.state_dict().items():
        assert torch.equal(tensors[name], value)


def test_relative_paths_resolve_against_root(tmp_path, network, header):
    repository = CheckpointRepository(tmp_path)
    repository.save("net.pt", network, header)
    assert (tmp_path / "net.pt").is_file()
    assert repository.load("net.pt")[0].seed == 7


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.pt")


def test_garbage_file(tmp_path):
    path = tmp_path / "garbage.pt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_foreign_format(tmp_path, network):
    path = tmp_path / "foreign.pt"
    header = {"format": "other", "version": 1, "architecture": {}, "seed": 0}
    torch.save({"header": header, "tensors": network.state_dict()}, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_missing_tensors(tmp_path, header):
    path = tmp_path / "headless.pt"
    torch.save({"header": header.model_dump()}, path)
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_error_is_a_data_error():
    assert CheckpointError("x").exit_code == 3
