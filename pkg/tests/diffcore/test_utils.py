import pytest

from codedvae.diffcore.exceptions import NetworkShapeError
from codedvae.diffcore.models import MultilayerPerceptron
from codedvae.diffcore.schemas import NetworkPlan
from codedvae.diffcore.utils import count_parameters, match_hidden_width
from codedvae.helpers import make_generator


def test_count_matches_plan():
    plan = NetworkPlan(sizes=[10, 20, 7, 5])
    assert count_parameters(MultilayerPerceptron(plan, make_generator(0))) == plan.parameter_count()


def test_match_hidden_width_stays_within_budget():
    plan = NetworkPlan(sizes=[196, 256, 20])
    target = NetworkPlan(sizes=[196, 256, 5]).parameter_count()
    matched = match_hidden_width(plan, 1, target)
    wider = matched.model_copy(update={"sizes": [196, matched.sizes[1] + 1, 20]})
    assert matched.parameter_count() <= target < wider.parameter_count()
    assert matched.sizes[0] == 196 and matched.sizes[2] == 20


def test_match_hidden_width_rejects_outer_layers():
    with pytest.raises(NetworkShapeError):
        match_hidden_width(NetworkPlan(sizes=[4, 8, 2]), 0, 100)


def test_match_hidden_width_rejects_tiny_budget():
    with pytest.raises(NetworkShapeError):
        match_hidden_width(NetworkPlan(sizes=[4, 8, 2]), 1, 5)
