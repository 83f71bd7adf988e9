"""MLP forward/backward correctness against finite differences, and training."""

import numpy as np
import pytest

from steerbo.nn import (
    Adam,
    MlpArchitecture,
    TrainingError,
    box_scaling,
    init_params,
    mlp_forward,
    mlp_grad,
    mlp_param_jacobian,
    train_regression,
    unpack_params,
)
from steerbo.types import Observation


def central_diff_jacobian(arch, theta, x, h=1e-6):
    """Independent oracle: central finite differences of the scalar output."""
    grad = np.empty(theta.shape[0])
    for p in range(theta.shape[0]):
        up, down = theta.copy(), theta.copy()
        up[p] += h
        down[p] -= h
        grad[p] = (mlp_forward(arch, up, x) - mlp_forward(arch, down, x)) / (2 * h)
    return grad


def test_all_zero_parameters_give_zero_output():
    arch = MlpArchitecture(3, (4, 4))
    theta = np.zeros(arch.n_params)
    rng = np.random.default_rng(0)
    assert mlp_forward(arch, theta, rng.normal(size=3)) == 0.0
    assert np.all(mlp_forward(arch, theta, rng.normal(size=(7, 3))) == 0.0)


def test_single_linear_layer_sums_inputs():
    arch = MlpArchitecture(4, ())
    theta = np.zeros(arch.n_params)
    theta[:4] = 1.0  # weight row of ones, bias zero
    x = np.array([1.0, 2.0, 3.0, 4.0])
    assert mlp_forward(arch, theta, x) == pytest.approx(10.0)


def test_parameter_count():
    arch = MlpArchitecture(10, (50, 50))
    assert arch.n_params == (10 * 50 + 50) + (50 * 50 + 50) + (50 * 1 + 1)
    layers = unpack_params(arch, np.zeros(arch.n_params))
    assert [w.shape for w, _ in layers] == [(50, 10), (50, 50), (1, 50)]


def test_dimension_mismatch_rejected():
    arch = MlpArchitecture(3, (4,))
    with pytest.raises(ValueError, match="dimension"):
        mlp_forward(arch, np.zeros(arch.n_params), np.zeros(5))


def test_jacobian_matches_finite_differences():
    arch = MlpArchitecture(5, (8, 6))
    rng = np.random.default_rng(1)
    theta = init_params(arch, rng)
    X = rng.normal(size=(10, 5))
    J = mlp_param_jacobian(arch, theta, X)
    for row, x in zip(J, X):
        fd = central_diff_jacobian(arch, theta, x)
        denom = max(np.linalg.norm(fd), 1e-12)
        assert np.linalg.norm(row - fd) / denom < 1e-4


def test_weighted_grad_matches_jacobian_combination():
    arch = MlpArchitecture(4, (6,))
    rng = np.random.default_rng(2)
    theta = init_params(arch, rng)
    X = rng.normal(size=(9, 4))
    w = rng.normal(size=9)
    expected = mlp_param_jacobian(arch, theta, X).T @ w
    got = mlp_grad(arch, theta, X, w)
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_adam_minimizes_quadratic():
    opt = Adam(2, lr=0.1)
    x = np.array([4.0, -3.0])
    for _ in range(500):
        x = opt.step(x, 2 * x)
    assert np.linalg.norm(x) < 1e-3


def test_box_scaling():
    center, halfwidth = box_scaling((-32.768, 32.768))
    assert center == 0.0
    assert halfwidth == 32.768
    assert box_scaling(None) == (0.0, 1.0)
    with pytest.raises(ValueError):
        box_scaling((1.0, 1.0))


def _make_observations(fn, X):
    return [Observation(x, fn(x), 0) for x in X]


def test_constant_targets_learned():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(12, 2))
    data = _make_observations(lambda x: 5.0, X)
    net = train_regression(data, MlpArchitecture(2, (8,)), steps=2000, lr=1e-2, rng=rng)
    # Constant targets standardize to zero; the net must sit at the mean.
    preds = net.predict(X)
    assert float(np.mean((preds - 5.0) ** 2)) < 1e-3


def test_loss_curve_descends_overall():
    rng = np.random.default_rng(4)
    X = rng.uniform(-2, 2, size=(30, 3))
    data = _make_observations(lambda x: float(x.sum()), X)
    net = train_regression(data, MlpArchitecture(3, (16, 16)), steps=400, rng=rng)
    assert net.loss_curve[-1] <= net.loss_curve[0]


def test_sine_fixture_rmse():
    """1-D sine, 50 points: standardized train RMSE stays under 0.1."""
    rng = np.random.default_rng(5)
    X = rng.uniform(-3, 3, size=(50, 1))
    data = _make_observations(lambda x: float(np.sin(x[0])), X)
    net = train_regression(
        data, MlpArchitecture(1, (50, 50)), steps=2000, lr=1e-2, rng=rng,
        input_bounds=(-3.0, 3.0),
    )
    resid = (net.predict(X) - np.array([o.y for o in data])) / net.target_std
    rmse = float(np.sqrt(np.mean(resid**2)))
    assert rmse < 0.1


def test_input_scaling_round_trip():
    rng = np.random.default_rng(6)
    X = rng.uniform(-30, 30, size=(20, 2))
    data = _make_observations(lambda x: float(x[0] - x[1]), X)
    net = train_regression(
        data, MlpArchitecture(2, (16,)), steps=500, lr=1e-2, rng=rng,
        input_bounds=(-30.0, 30.0),
    )
    assert net.input_halfwidth == 30.0
    scaled = net.scale_inputs(X)
    assert np.abs(scaled).max() <= 1.0 + 1e-12


def test_too_few_observations_rejected():
    with pytest.raises(TrainingError, match="two observations"):
        train_regression(
            [Observation(np.zeros(2), 0.0, 0)],
            MlpArchitecture(2, (4,)),
            rng=np.random.default_rng(0),
        )
