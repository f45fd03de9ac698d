"""Regression stage: least-squares families, kernel smoothing, bandwidths."""

import math

import numpy as np
import pytest

from stochis import (
    KernelRegressor,
    ParametricRegressor,
    default_bandwidth_grid,
    exp_linear_family,
    fit_kernel_regression,
    fit_least_squares,
    logistic_family,
    make_exp_exp,
    reference_bandwidth,
    select_bandwidth_cv,
)
from stochis.core import Dataset
from stochis.regress import constant_family


def _exp_dataset(theta, m, rng, noise=0.0):
    X = rng.exponential(1.0, (m, 1))
    y = np.exp(theta[0] + theta[1] * X[:, 0])
    if noise:
        y = y + noise * rng.standard_normal(m)
    return X, y


def test_least_squares_recovers_exp_family_noiseless():
    X, y = _exp_dataset((0.0, -1.0), 200, np.random.default_rng(0))
    reg = ParametricRegressor(exp_linear_family(1), random_state=1).fit(X, y)
    assert np.allclose(reg.theta_, [0.0, -1.0], atol=1e-4)
    assert reg.converged_


def test_least_squares_constant_family_is_mean():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((50, 1))
    y = rng.uniform(size=50)
    reg = ParametricRegressor(constant_family(), random_state=0).fit(X, y)
    assert reg.theta_[0] == pytest.approx(y.mean(), abs=1e-6)


def test_logistic_family_on_binary_pilot():
    scenario = make_exp_exp(1)
    rng = np.random.default_rng(8)
    X = scenario.q0.sample(rng, 300)
    V = scenario.model.draw(X, rng)
    y = scenario.outcome(V) ** 2
    reg = fit_least_squares(logistic_family(1), Dataset(x=X, v=V, y=y), random_state=2)
    assert reg.converged_
    assert reg.residual_ss_ > 0.0


def test_residual_never_exceeds_objective_at_init():
    rng = np.random.default_rng(9)
    X, y = _exp_dataset((0.3, -0.6), 120, rng, noise=0.2)
    y = np.abs(y)
    family = exp_linear_family(1)
    reg = ParametricRegressor(family, random_state=3).fit(X, y)
    at_init = float(np.sum((y - family.predict(family.init, X)) ** 2))
    assert reg.residual_ss_ <= at_init + 1e-12


def test_parametric_predict_clamps():
    family = exp_linear_family(1)
    reg = ParametricRegressor(family, cap=1.0)
    reg.theta_ = np.array([math.log(1.7), 0.0])
    reg.n_features_in_ = 1
    assert reg.predict([[0.0]])[0] == 1.0
    reg.theta_ = np.array([math.log(1e-30), 0.0])
    assert reg.predict([[0.0]])[0] == 1e-12
    reg.theta_ = np.array([0.0, -1.0])
    assert reg.predict([[0.0]])[0] == 1.0


def test_kernel_single_record_predicts_its_value():
    reg = KernelRegressor(bandwidth=1.0).fit([[0.0]], [0.7])
    assert reg.predict([[5.0]])[0] == pytest.approx(0.7)
    tiny = KernelRegressor(bandwidth=1e-4).fit([[0.0]], [0.7])
    assert tiny.predict([[5.0]])[0] == pytest.approx(0.7)


def test_kernel_constant_response():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((40, 2))
    reg = KernelRegressor(bandwidth=0.5).fit(X, np.full(40, 0.3))
    probes = rng.standard_normal((10, 2))
    assert np.allclose(reg.predict(probes), 0.3)


def test_kernel_symmetric_pair_interpolates():
    reg = KernelRegressor(bandwidth=0.8).fit([[-1.0], [1.0]], [0.0, 1.0])
    assert reg.predict([[0.0]])[0] == pytest.approx(0.5, abs=1e-12)


def test_kernel_self_weight_dominates_at_small_bandwidth():
    X = np.array([[0.0], [1.0], [2.5]])
    y = np.array([0.2, 0.9, 0.4])
    reg = KernelRegressor(bandwidth=1e-4).fit(X, y)
    assert reg.predict([[1.0]])[0] == pytest.approx(0.9, abs=1e-9)


def test_kernel_far_point_falls_back_to_nearest_record():
    X = np.array([[0.0], [1.0]])
    y = np.array([0.2, 0.9])
    reg = KernelRegressor(bandwidth=0.01).fit(X, y)
    assert reg.predict([[500.0]])[0] == pytest.approx(0.9)
    assert reg.predict([[-500.0]])[0] == pytest.approx(0.2)


def test_kernel_cap_clamp():
    reg = KernelRegressor(bandwidth=0.5, cap=1.0).fit([[0.0]], [1.3])
    assert reg.predict([[0.0]])[0] == 1.0
    assert reg.predict_raw([[0.0]])[0] == pytest.approx(1.3)


def test_kernel_prediction_is_convex_combination():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((60, 1))
    y = rng.uniform(size=60)
    reg = KernelRegressor(bandwidth=0.4).fit(X, y)
    probes = rng.uniform(-2, 2, size=(200, 1))
    raw = reg.predict_raw(probes)
    assert np.all(raw >= y.min() - 1e-12) and np.all(raw <= y.max() + 1e-12)


def test_kernel_invariant_under_record_permutation():
    rng = np.random.default_rng(13)
    X = rng.standard_normal((50, 2))
    y = rng.uniform(size=50)
    perm = rng.permutation(50)
    probes = rng.standard_normal((20, 2))
    a = KernelRegressor(bandwidth=0.7).fit(X, y).predict(probes)
    b = KernelRegressor(bandwidth=0.7).fit(X[perm], y[perm]).predict(probes)
    assert np.allclose(a, b)


def test_cv_selects_interior_bandwidth_for_smooth_response():
    rng = np.random.default_rng(21)
    X = rng.uniform(-2, 2, size=(500, 1))
    y = 0.5 + 0.4 * np.cos(1.5 * X[:, 0]) + 0.05 * rng.standard_normal(500)
    grid = np.geomspace(0.05, 2.0, 20)
    h = select_bandwidth_cv(X, y, grid)
    assert grid[0] < h < grid[-1]


def test_cv_single_and_duplicate_grid():
    rng = np.random.default_rng(22)
    X = rng.standard_normal((30, 1))
    y = rng.uniform(size=30)
    assert select_bandwidth_cv(X, y, [0.3]) == 0.3
    grid = [0.1, 0.3, 0.9]
    assert select_bandwidth_cv(X, y, grid) == select_bandwidth_cv(X, y, grid * 3)


def test_cv_all_degenerate_raises():
    X = (np.arange(10, dtype=float) * 1e6).reshape(-1, 1)
    y = np.linspace(0, 1, 10)
    with pytest.raises(ValueError):
        select_bandwidth_cv(X, y, [1e-3])


def test_cv_requires_ten_records():
    with pytest.raises(ValueError):
        select_bandwidth_cv(np.zeros((5, 1)), np.zeros(5), [0.1])


def test_reference_bandwidth_values():
    value = reference_bandwidth(600, 1)
    assert value == pytest.approx((math.log(600) / 600) ** 0.2, rel=1e-12)
    assert value == pytest.approx(0.4033, abs=5e-4)
    m = round(math.e ** 2)
    assert reference_bandwidth(m, 1) == pytest.approx((math.log(m) / m) ** 0.2, rel=1e-12)
    assert reference_bandwidth(600, 1, scale=2.0) == pytest.approx(2 * value, rel=1e-12)
    with pytest.raises(ValueError):
        reference_bandwidth(1, 1)


def test_default_grid_spans_pilot_scale():
    rng = np.random.default_rng(30)
    X = 2.0 * rng.standard_normal((300, 1))
    grid = default_bandwidth_grid(X)
    scale = X.std()
    assert len(grid) == 20
    assert grid[0] == pytest.approx(0.05 * scale, rel=1e-9)
    assert grid[-1] == pytest.approx(2.0 * scale, rel=1e-9)


def test_fit_helpers_reject_empty_data():
    empty = Dataset(x=np.zeros((0, 1)), v=[], y=[])
    with pytest.raises(ValueError):
        fit_least_squares(exp_linear_family(1), empty)
    with pytest.raises(ValueError):
        fit_kernel_regression(empty, 0.5)


def test_sklearn_param_round_trip():
    reg = KernelRegressor(bandwidth=0.25, cap=1.0)
    assert reg.get_params()["bandwidth"] == 0.25
    reg.set_params(bandwidth=0.5)
    assert reg.bandwidth == 0.5


def _sup_error_of_exp_fit(scenario, m, rng, grid, truth, seed):
    X = scenario.q0.sample(rng, m)
    y = scenario.outcome(scenario.model.draw(X, rng)) ** 2
    reg = ParametricRegressor(scenario.correct_family, cap=1.0, random_state=seed).fit(X, y)
    return np.max(np.abs(reg.predict(grid) - truth))


def test_parametric_sup_error_shrinks_at_root_m_rate():
    # Average sup-norm error should roughly halve from m=100 to m=400.
    scenario = make_exp_exp(1)
    rng = np.random.default_rng(7)
    grid = np.linspace(0, 4, 41).reshape(-1, 1)
    truth = scenario.true_r(grid)
    small, large = [], []
    for seed in range(50):
        small.append(_sup_error_of_exp_fit(scenario, 100, rng, grid, truth, seed))
        large.append(_sup_error_of_exp_fit(scenario, 400, rng, grid, truth, seed))
    ratio = np.mean(large) / np.mean(small)
    assert 0.3 <= ratio <= 0.8


def test_kernel_sup_error_decreases_with_pilot_size():
    scenario = make_exp_exp(1)
    rng = np.random.default_rng(7)
    grid = np.linspace(0, 4, 41).reshape(-1, 1)
    truth = scenario.true_r(grid)
    mean_err = {}
    for m in (250, 1000, 4000):
        errs = []
        for _ in range(50):
            X = scenario.q0.sample(rng, m)
            y = scenario.outcome(scenario.model.draw(X, rng)) ** 2
            reg = KernelRegressor(bandwidth=reference_bandwidth(m, 1), cap=1.0).fit(X, y)
            errs.append(np.max(np.abs(reg.predict(grid) - truth)))
        mean_err[m] = np.mean(errs)
    assert mean_err[250] > mean_err[1000] > mean_err[4000]
