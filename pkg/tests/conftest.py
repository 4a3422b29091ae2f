from collections.abc import Callable

import pytest
import torch

from codedvae.data_io.schemas import Dataset, SyntheticSpec
from codedvae.data_io.services import synth_generate
from codedvae.helpers import make_generator
from codedvae.models.models import DiscreteVAE
from codedvae.models.schemas import ModelSpec
from codedvae.session import sessionmanager
from codedvae.training.utils import build_model

TINY = {"info_len": 3, "repeat": 2, "data_dim": 8, "encoder_hidden": [6], "decoder_hidden": [6]}


@pytest.fixture(autouse=True)
def isolated_runs(tmp_path, monkeypatch):
    monkeypatch.setattr(sessionmanager, "root", tmp_path / "runs")


@pytest.fixture
def generator() -> torch.Generator:
    return make_generator(0)


@pytest.fixture
def make_model() -> Callable[..., DiscreteVAE]:
    """Factory of tiny models on 8-dimensional items; fields override the defaults."""

    def factory(kind: str = "coded", seed: int = 0, **fields) -> DiscreteVAE:
        values = {**TINY, **fields}
        if kind == "uncoded":
            values["repeat"] = 1
        return build_model(ModelSpec(kind=kind, **values), seed)

    return factory


@pytest.fixture
def tiny_spec() -> SyntheticSpec:
    return SyntheticSpec(info_len=3, repeat=2, hidden=8, n_items=96, height=2, width=4)


@pytest.fixture
def tiny_data(tiny_spec) -> Dataset:
    return synth_generate(tiny_spec)


def zero_(module: torch.nn.Module) -> None:
    with torch.no_grad():
        for param in module.parameters():
            param.zero_()


@pytest.fixture
def zeroed() -> Callable[[torch.nn.Module], None]:
    return zero_
