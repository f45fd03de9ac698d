"""Pooled two-stage estimator, crude Monte Carlo baseline, and diagnostics.

The final estimate pools both stages with importance weights:

    E_hat = (1/n) [ sum_{stage 1} g(V_i) p(X_i)/q0(X_i)
                    + sum_{stage 2} g(V_i) p(X_i)/q_hat(X_i) ].

Effective sample sizes follow the standard (sum w)^2 / sum w^2 form and its
outcome-specific variant with w replaced by |g| * w, which is the better
indicator of unreliable importance sampling for stochastic simulators.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .validation import as_point_matrix, as_vector

__all__ = [
    "StageSample",
    "EstimateReport",
    "two_stage_estimate",
    "cmc_estimate",
    "weighted_combination",
    "ess",
    "ess_g",
    "oracle_variance",
]


@dataclass(frozen=True)
class StageSample:
    """Weighted draws from one sampling stage.

    ``g`` holds the outcome values g(V_i) and ``weights`` the likelihood
    ratios p(X_i) / q(X_i) for the density this stage sampled from,
    identified by ``label``.
    """

    x: np.ndarray
    v: np.ndarray
    g: np.ndarray
    weights: np.ndarray
    label: str

    def __post_init__(self):
        if np.size(self.x):
            x = as_point_matrix(self.x)
        else:
            x = np.asarray(self.x, dtype=float)
            x = x.reshape(0, x.shape[1] if x.ndim == 2 else 0)
        k = x.shape[0]
        v = as_vector(self.v, k, "v")
        g = as_vector(self.g, k, "g")
        w = as_vector(self.weights, k, "weights")
        if np.any(w <= 0.0):
            raise ValueError("importance weights must be positive")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.x.shape[0]

    @classmethod
    def empty(cls, dim: int, label: str = "q0") -> "StageSample":
        return cls(np.empty((0, dim)), np.empty(0), np.empty(0), np.empty(0), label)


@dataclass(frozen=True)
class EstimateReport:
    """Estimate plus diagnostics for one run of a sampling pipeline.

    ``stderr`` treats the n pooled weighted terms as independent draws; for
    the two-stage estimator that is an approximation (stage 2 depends on
    stage 1 through the fitted density), so it is a diagnostic rather than
    a calibrated confidence statement, and is flagged as such.
    """

    estimate: float
    n: int
    m: int
    stderr: float
    ess: float
    ess_g: float
    stage1_estimate: float = float("nan")
    stage2_estimate: float = float("nan")
    alpha: float | None = None
    flags: tuple = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "n": self.n,
            "m": self.m,
            "stderr": self.stderr,
            "ess": self.ess,
            "ess_g": self.ess_g,
            "stage1_estimate": self.stage1_estimate,
            "stage2_estimate": self.stage2_estimate,
            "alpha": self.alpha,
            "flags": list(self.flags),
        }


def ess(weights) -> float:
    """Effective sample size (sum w)^2 / sum w^2 of positive weights."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size == 0:
        raise ValueError("ess of an empty weight sequence is undefined")
    if np.any(w <= 0.0) or not np.all(np.isfinite(w)):
        raise ValueError("ess requires positive finite weights")
    return float(w.sum() ** 2 / (w * w).sum())


def ess_g(weights, g_values) -> float:
    """Outcome-specific effective sample size using w~ = |g| * w.

    Terms with g = 0 stay in the sums (contributing zero).  Returns 0 when
    every w~ vanishes; callers flag that case.
    """
    w = np.asarray(weights, dtype=float).reshape(-1)
    g = np.asarray(g_values, dtype=float).reshape(-1)
    if w.shape != g.shape:
        raise ValueError("weights and g_values must have equal length")
    wt = np.abs(g) * w
    total_sq = (wt * wt).sum()
    if total_sq == 0.0:
        return 0.0
    return float(wt.sum() ** 2 / total_sq)


def _pooled_report(terms: np.ndarray, weights: np.ndarray, g: np.ndarray,
                   m: int, stage1_estimate: float, stage2_estimate: float,
                   extra_flags: tuple = ()) -> EstimateReport:
    n = terms.size
    estimate = float(terms.sum() / n)
    flags = list(extra_flags)
    if n > 1:
        stderr = float(np.sqrt(terms.var(ddof=1) / n))
    else:
        stderr = 0.0
        flags.append("stderr_undefined")
    ess_value = ess(weights)
    ess_g_value = ess_g(weights, g)
    if ess_g_value == 0.0:
        flags.append("ess_g_zero")
    return EstimateReport(estimate=estimate, n=n, m=m, stderr=stderr,
                          ess=ess_value, ess_g=ess_g_value,
                          stage1_estimate=stage1_estimate,
                          stage2_estimate=stage2_estimate,
                          flags=tuple(flags))


def two_stage_estimate(stage1: StageSample, stage2: StageSample) -> EstimateReport:
    """Pool both stages into the final weighted estimate.

    ``stage1`` may be empty (pure importance sampling under the stage 2
    density).  The per-stage estimates reported alongside are each
    normalised by their own sample size, so they are unbiased on their own
    and suitable for a variance-weighted combination.
    """
    if len(stage1) and len(stage2) and stage1.x.shape[1] != stage2.x.shape[1]:
        raise ValueError("stage dimensions differ")
    if len(stage1) and len(stage2) and stage1.label == stage2.label:
        raise ValueError("stages must come from distinct sampling densities")
    m = len(stage1)
    n = m + len(stage2)
    if n < 1:
        raise ValueError("need at least one draw across the two stages")

    t1 = stage1.g * stage1.weights
    t2 = stage2.g * stage2.weights
    terms = np.concatenate([t1, t2])
    weights = np.concatenate([stage1.weights, stage2.weights])
    g = np.concatenate([stage1.g, stage2.g])

    flags = []
    if m == 0:
        flags.append("empty_stage1")
    stage1_estimate = float(t1.mean()) if m else float("nan")
    stage2_estimate = float(t2.mean()) if len(stage2) else float("nan")
    return _pooled_report(terms, weights, g, m, stage1_estimate,
                          stage2_estimate, tuple(flags))


def cmc_estimate(sample: StageSample) -> EstimateReport:
    """Crude Monte Carlo baseline: plain mean of g under unit weights."""
    if len(sample) == 0:
        raise ValueError("empty sample")
    if not np.allclose(sample.weights, 1.0):
        raise ValueError("crude Monte Carlo requires unit weights (draws from p)")
    return _pooled_report(sample.g * sample.weights, sample.weights, sample.g,
                          m=0, stage1_estimate=float("nan"),
                          stage2_estimate=float(sample.g.mean()))


def weighted_combination(e1: float, v1: float, e2: float,
                         v2: float) -> tuple[float, float]:
    """Variance-optimal convex combination of two independent unbiased
    estimates: alpha = v2 / (v1 + v2), result alpha*e1 + (1-alpha)*e2."""
    if v1 <= 0.0 or v2 <= 0.0:
        raise ValueError("variances must be positive")
    alpha = v2 / (v1 + v2)
    return alpha * e1 + (1.0 - alpha) * e2, alpha


def oracle_variance(scenario, mc_size: int = 10 ** 7,
                    rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Minimal achievable scaled variance and the true estimand.

    Computes ``V_min = E_p^2[sqrt(r(X))] - E_p^2[r_dagger(X)]`` and
    ``E_true = E_p[r_dagger(X)]`` from the scenario's true conditional
    moments, by adaptive quadrature for d <= 2 and Monte Carlo integration
    above.
    """
    true_r = getattr(scenario, "true_r", None)
    true_rd = getattr(scenario, "true_r_dagger", None) or true_r
    if true_r is None:
        raise ValueError("scenario does not expose a true regression function")
    p = scenario.p

    if p.dim <= 2:
        box = p.integration_box()
        if p.dim == 1:
            lo, hi = float(box.lower[0]), float(box.upper[0])

            def integral(fn):
                value, _ = integrate.quad(
                    lambda x: float(fn(np.array([[x]]))[0] * p.pdf(np.array([[x]]))[0]),
                    lo, hi, epsabs=1e-12, epsrel=1e-9, limit=500)
                return value
        else:

            def integral(fn):
                value, _ = integrate.dblquad(
                    lambda x2, x1: float(fn(np.array([[x1, x2]]))[0]
                                         * p.pdf(np.array([[x1, x2]]))[0]),
                    float(box.lower[0]), float(box.upper[0]),
                    float(box.lower[1]), float(box.upper[1]),
                    epsabs=1e-10, epsrel=1e-7)
                return value

        e_sqrt_r = integral(lambda X: np.sqrt(np.maximum(true_r(X), 0.0)))
        e_rd = integral(true_rd)
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        X = p.sample(rng, mc_size)
        e_sqrt_r = float(np.sqrt(np.maximum(true_r(X), 0.0)).mean())
        e_rd = float(np.asarray(true_rd(X), dtype=float).mean())

    v_min = e_sqrt_r ** 2 - e_rd ** 2
    return float(v_min), float(e_rd)
