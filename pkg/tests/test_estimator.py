"""Pooled estimators, effective sample sizes, minimal-variance constants."""

import json
import math

import numpy as np
import pytest
from scipy.special import ndtr

from stochis import (
    BoxUniform,
    StageSample,
    cmc_estimate,
    ess,
    ess_g,
    make_exp_exp,
    make_normal_normal,
    oracle_variance,
    two_stage_estimate,
    weighted_combination,
)
from stochis.core import ackley_mean


def _stage(x, g, w, label):
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    return StageSample(x, np.zeros(len(x)), g, w, label)


def test_ess_values():
    assert ess([1, 1, 1, 1]) == pytest.approx(4.0)
    assert ess([2, 1, 1]) == pytest.approx(16 / 6)
    assert ess([3.7]) == pytest.approx(1.0)


def test_ess_errors():
    with pytest.raises(ValueError):
        ess([])
    with pytest.raises(ValueError):
        ess([1.0, 0.0])


def test_ess_bounds_and_scale_invariance():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.uniform(0.1, 5.0, size=rng.integers(2, 40))
        value = ess(w)
        assert 1.0 <= value <= len(w) + 1e-9
        assert ess(3.914 * w) == pytest.approx(value, rel=1e-12)
        assert ess_g(3.914 * w, np.ones_like(w)) == pytest.approx(value, rel=1e-12)
    assert ess(np.full(17, 2.3)) == pytest.approx(17.0)
    assert ess([1.0, 1.0, 1.0001]) < 3.0


def test_ess_g_values():
    assert ess_g([1, 1, 1], [1, 0, 1]) == pytest.approx(2.0)
    w = np.array([2.0, 0.5, 1.5])
    assert ess_g(w, np.full(3, -0.4)) == pytest.approx(ess(w))
    assert ess_g(w, np.zeros(3)) == 0.0


def test_two_stage_reduces_to_plain_mean_with_unit_weights():
    rng = np.random.default_rng(1)
    g = rng.uniform(size=10)
    report = two_stage_estimate(_stage(rng.standard_normal(4), g[:4], np.ones(4), "q0"),
                                _stage(rng.standard_normal(6), g[4:], np.ones(6), "qstar"))
    assert report.estimate == pytest.approx(g.mean())
    assert report.n == 10 and report.m == 4


def test_two_stage_empty_first_stage_is_plain_importance_sampling():
    rng = np.random.default_rng(2)
    g = rng.uniform(size=8)
    w = rng.uniform(0.5, 2.0, size=8)
    report = two_stage_estimate(StageSample.empty(1, "q0"),
                                _stage(rng.standard_normal(8), g, w, "qstar"))
    assert report.estimate == pytest.approx(np.mean(g * w))
    assert report.m == 0 and "empty_stage1" in report.flags
    assert math.isnan(report.stage1_estimate)


def test_two_stage_validation_errors():
    a = _stage([0.0], [1.0], [1.0], "q0")
    b = StageSample(np.zeros((1, 2)), [0.0], [1.0], [1.0], "qstar")
    with pytest.raises(ValueError):
        two_stage_estimate(a, b)
    with pytest.raises(ValueError):
        two_stage_estimate(a, _stage([1.0], [1.0], [1.0], "q0"))


def test_stage_sample_rejects_nonpositive_weights():
    with pytest.raises(ValueError):
        _stage([0.0], [1.0], [0.0], "q0")


def test_cmc_report():
    report = cmc_estimate(_stage([0.0, 1.0, 2.0], np.zeros(3), np.ones(3), "p"))
    assert report.estimate == 0.0 and report.stderr == 0.0
    single = cmc_estimate(_stage([0.0], [0.4], [1.0], "p"))
    assert single.stderr == 0.0 and "stderr_undefined" in single.flags
    with pytest.raises(ValueError):
        cmc_estimate(_stage([0.0], [1.0], [2.0], "p"))


def test_cmc_matches_bernoulli_variance():
    rng = np.random.default_rng(3)
    g = (rng.uniform(size=4000) < 0.5).astype(float)
    report = cmc_estimate(_stage(rng.standard_normal(4000), g, np.ones(4000), "p"))
    assert report.stderr == pytest.approx(g.std(ddof=1) / math.sqrt(4000))
    assert report.ess == pytest.approx(4000.0)


def test_weighted_combination_arithmetic():
    estimate, alpha = weighted_combination(1.0, 2.0, 3.0, 2.0)
    assert alpha == 0.5 and estimate == 2.0
    estimate, alpha = weighted_combination(0.0, 3.0, 1.0, 1.0)
    assert alpha == pytest.approx(0.25)
    estimate, _ = weighted_combination(0.7, 5.0, 0.7, 0.1)
    assert estimate == pytest.approx(0.7)
    with pytest.raises(ValueError):
        weighted_combination(0.0, 0.0, 1.0, 1.0)


def test_weighted_combination_variance_is_optimal():
    rng = np.random.default_rng(4)
    v1, v2 = 3.0, 1.0
    e1 = rng.normal(0.0, math.sqrt(v1), size=20000)
    e2 = rng.normal(0.0, math.sqrt(v2), size=20000)
    combined = np.array([weighted_combination(a, v1, b, v2)[0] for a, b in zip(e1, e2)])
    var = combined.var(ddof=1)
    target = v1 * v2 / (v1 + v2)
    se = var * math.sqrt(2.0 / len(combined))
    assert abs(var - target) < 3 * se
    assert var < min(v1, v2)


def test_oracle_variance_exp_exp_closed_form():
    v_min, e_true = oracle_variance(make_exp_exp(1))
    assert e_true == pytest.approx(0.5, abs=1e-9)
    assert v_min == pytest.approx(7.0 / 36.0, abs=1e-8)
    scenario2 = make_exp_exp(2)
    v_min2, e_true2 = oracle_variance(scenario2)
    assert e_true2 == pytest.approx(0.5, abs=1e-7)
    assert v_min2 == pytest.approx(scenario2.v_min, abs=1e-7)


def test_oracle_variance_exp_exp_high_dim_monte_carlo():
    scenario = make_exp_exp(4)
    v_min, e_true = oracle_variance(scenario, mc_size=10 ** 7,
                                    rng=np.random.default_rng(5))
    assert abs(e_true - scenario.e_true) < 5e-4
    assert abs(v_min - scenario.v_min) < 2e-3


def test_oracle_variance_zero_for_deterministic_indicator():
    class HalfSpace:
        p = BoxUniform([-1.0], [1.0])

        @staticmethod
        def true_r(X):
            return (X[:, 0] > 0.0).astype(float)

        true_r_dagger = true_r

    v_min, e_true = oracle_variance(HalfSpace())
    assert e_true == pytest.approx(0.5, abs=1e-9)
    assert v_min == pytest.approx(0.0, abs=1e-8)


def test_normal_normal_v_min_against_independent_quadrature():
    # Gauss-Legendre over the positive half-line (the integrands are even in
    # x) is an independent route to the two integrals behind the stored
    # constants.
    scenario = make_normal_normal(1)
    nodes, weights = np.polynomial.legendre.leggauss(400)
    x = 6.0 * (nodes + 1.0)
    w = 6.0 * weights
    phi = np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    r = ndtr(ackley_mean(x.reshape(-1, 1)) - scenario.xi)
    e_r = 2.0 * float(np.sum(w * phi * r))
    e_sqrt = 2.0 * float(np.sum(w * phi * np.sqrt(r)))
    assert abs(e_r - scenario.e_true) < 1e-8
    assert abs(e_sqrt ** 2 - e_r ** 2 - scenario.v_min) < 1e-8


def test_report_json_field_names():
    report = two_stage_estimate(StageSample.empty(1, "q0"),
                                _stage([0.0, 1.0], [1.0, 0.0], [1.0, 1.0], "qstar"))
    payload = json.loads(json.dumps(report.to_dict()))
    for key in ("estimate", "n", "m", "stderr", "ess", "ess_g", "alpha", "flags"):
        assert key in payload
    assert payload["alpha"] is None
    assert payload["n"] == 2
