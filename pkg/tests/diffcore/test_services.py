import numpy as np
import pytest
import torch

from codedvae.diffcore.exceptions import NetworkShapeError, NonFiniteError, TapeConsumedError
from codedvae.diffcore.models import MultilayerPerceptron
from codedvae.diffcore.schemas import NetworkPlan
from codedvae.diffcore.services import backward, finite_diff_check, forward_mlp
from codedvae.helpers import make_generator


@pytest.fixture
def linear_plan() -> NetworkPlan:
    # slope 1 makes the hidden nonlinearity the identity
    return NetworkPlan(sizes=[3, 4, 2], negative_slope=1.0)


@pytest.fixture
def x() -> torch.Tensor:
    return torch.tensor([0.3, -1.2, 0.7], dtype=torch.float64)


def test_zero_network_outputs_zero(linear_plan, x, zeroed):
    network = MultilayerPerceptron(linear_plan, make_generator(0))
    zeroed(network)
    output, _ = forward_mlp(linear_plan, network, x)
    assert torch.equal(output, torch.zeros(2, dtype=torch.float64))


def test_affine_composition(linear_plan, x):
    network = MultilayerPerceptron(linear_plan, make_generator(1))
    with torch.no_grad():
        for layer in network.layers:
            layer.bias.uniform_(-1.0, 1.0, generator=make_generator(2))
    first, second = network.layers
    expected = second.weight @ (first.weight @ x + first.bias) + second.bias
    output, _ = forward_mlp(linear_plan, network, x)
    np.testing.assert_allclose(output.detach().numpy(), expected.detach().numpy(), rtol=1e-12)


def test_logistic_output_range(x):
    plan = NetworkPlan(sizes=[3, 5, 4], output="logistic")
    output, _ = forward_mlp(plan, MultilayerPerceptron(plan, make_generator(0)), 10.0 * x)
    assert torch.all(output > 0.0) and torch.all(output < 1.0)


def test_forward_is_deterministic(x):
    plan = NetworkPlan(sizes=[3, 5, 4])
    first = forward_mlp(plan, MultilayerPerceptron(plan, make_generator(5)), x)[0]
    second = forward_mlp(plan, MultilayerPerceptron(plan, make_generator(5)), x)[0]
    assert torch.equal(first, second)


def test_forward_rejects_foreign_plan(linear_plan, x):
    network = MultilayerPerceptron(NetworkPlan(sizes=[3, 6, 2]), make_generator(0))
    with pytest.raises(NetworkShapeError):
        forward_mlp(linear_plan, network, x)


def test_forward_rejects_wrong_input_size(linear_plan):
    network = MultilayerPerceptron(linear_plan, make_generator(0))
    with pytest.raises(NetworkShapeError):
        forward_mlp(linear_plan, network, torch.zeros(5, dtype=torch.float64))


def test_forward_reports_non_finite_layer(linear_plan, x):
    network = MultilayerPerceptron(linear_plan, make_generator(0))
    with torch.no_grad():
        network.layers[1].bias.fill_(float("inf"))
    with pytest.raises(NonFiniteError) as info:
        forward_mlp(linear_plan, network, x)
    assert info.value.layer == 1


def test_backward_weight_gradient_is_outer_product(linear_plan, x):
    network = MultilayerPerceptron(linear_plan, make_generator(3))
    seed = torch.tensor([0.5, -2.0], dtype=torch.float64)
    output, tape = forward_mlp(linear_plan, network, x)
    grads = backward(tape, seed)
    first, second = network.layers
    hidden = (first.weight @ x + first.bias).detach()
    np.testing.assert_allclose(
        grads["layers.1.weight"].numpy(), torch.outer(seed, hidden).numpy(), rtol=1e-12
    )
    expected_input = first.weight.T @ (second.weight.T @ seed)
    np.testing.assert_allclose(
        grads["input"].numpy(), expected_input.detach().numpy(), rtol=1e-12
    )


def test_constant_loss_has_zero_gradient(linear_plan, x):
    network = MultilayerPerceptron(linear_plan, make_generator(0))
    _, tape = forward_mlp(linear_plan, network, x)
    grads = backward(tape, torch.zeros(2, dtype=torch.float64))
    assert all(torch.count_nonzero(g) == 0 for g in grads.values())


def test_tape_is_single_use(linear_plan, x):
    network = MultilayerPerceptron(linear_plan, make_generator(0))
    _, tape = forward_mlp(linear_plan, network, x)
    seed = torch.ones(2, dtype=torch.float64)
    backward(tape, seed)
    with pytest.raises(TapeConsumedError):
        backward(tape, seed)


def test_backward_matches_finite_differences():
    plan = NetworkPlan(sizes=[4, 7, 5, 3], output="logistic")
    network = MultilayerPerceptron(plan, make_generator(8))
    inputs = torch.rand((6, 4), generator=make_generator(9), dtype=torch.float64)

    def loss() -> torch.Tensor:
        return network(inputs).pow(2).sum()

    report = finite_diff_check(loss, network, tol=1e-6, abs_floor=1e-3)
    assert report.passed, report.per_param
    assert report.checked > 0


def test_quadratic_loss_is_exact():
    p = torch.linspace(-2.0, 3.0, 11, dtype=torch.float64).requires_grad_(True)
    report = finite_diff_check(lambda: 0.5 * p.pow(2).sum(), {"p": p}, tol=1e-8)
    assert report.passed
    assert report.max_rel_error < 1e-8


def test_corrupted_gradient_fails():
    p = torch.linspace(0.5, 3.0, 6, dtype=torch.float64).requires_grad_(True)
    wrong = [1.1 * p.detach()]
    report = finite_diff_check(lambda: 0.5 * p.pow(2).sum(), [p], analytic=wrong)
    assert not report.passed
    assert report.max_rel_error == pytest.approx(0.1 / 2.1, rel=1e-4)


def test_subset_checks_requested_entries():
    p = torch.linspace(0.5, 3.0, 50, dtype=torch.float64).requires_grad_(True)
    report = finite_diff_check(lambda: p.pow(3).sum(), [p], max_entries=7, tol=1e-6)
    assert report.checked == 7
    assert report.passed


def test_non_finite_loss_is_rejected():
    p = torch.tensor([1.0], dtype=torch.float64, requires_grad=True)
    with pytest.raises(NonFiniteError):
        finite_diff_check(lambda: torch.log(p - 1.0).sum(), [p])
