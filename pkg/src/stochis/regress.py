"""Regression models for the conditional second moment r(x) = E[g^2(V) | X=x].

Two fitters are provided, both scikit-learn compatible estimators:

* :class:`ParametricRegressor` -- nonlinear least squares over a declared
  parametric family, minimised with Nelder-Mead plus random restarts.
* :class:`KernelRegressor` -- Nadaraya-Watson smoothing with a Gaussian-shape
  kernel and a single scalar bandwidth; leave-one-out cross-validation and a
  plug-in reference rule select the bandwidth.

Predictions are clamped into ``[floor, cap]``.  The floor keeps sqrt(r_hat)
strictly positive everywhere, which guarantees the importance sampling
density built from it has full support (and hence finite weights).  The cap
applies only to probability targets, where r is itself a probability.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr
from sklearn.base import BaseEstimator, RegressorMixin

from .core import Dataset
from .validation import as_point_matrix, as_vector, check_count, check_positive

__all__ = [
    "FLOOR_EPS",
    "ParametricFamily",
    "exp_linear_family",
    "logistic_family",
    "gaussian_tail_family",
    "constant_family",
    "ParametricRegressor",
    "KernelRegressor",
    "fit_least_squares",
    "fit_kernel_regression",
    "select_bandwidth_cv",
    "default_bandwidth_grid",
    "reference_bandwidth",
]

# Lower clamp for all regression predictions.  sqrt(FLOOR_EPS) = 1e-6 bounds
# importance weights at 1e6 times the normalizing constant.
FLOOR_EPS = 1e-12

# Exponent guard against overflow while the optimizer explores.
_EXP_CLIP = 700.0

# Kernel-weight denominators below this are treated as underflowed.
_DENOM_TINY = 1e-300


@dataclass(frozen=True)
class ParametricFamily:
    """A parametric model theta -> r_theta(x) with a starting point.

    ``predict(theta, X)`` must return finite values for theta near ``init``
    and accept a (k, d) batch.
    """

    name: str
    predict: callable
    param_dim: int
    init: np.ndarray = field(default=None)

    def __post_init__(self):
        init = np.zeros(self.param_dim) if self.init is None else \
            np.asarray(self.init, dtype=float).reshape(-1)
        if init.shape[0] != self.param_dim:
            raise ValueError("init length must equal param_dim")
        object.__setattr__(self, "init", init)


def exp_linear_family(dim: int) -> ParametricFamily:
    """r_theta(x) = exp(theta_0 + theta_1 x_1 + ... + theta_d x_d), init 0."""

    def predict(theta, X):
        eta = theta[0] + X @ theta[1:]
        return np.exp(np.clip(eta, -_EXP_CLIP, _EXP_CLIP))

    return ParametricFamily("exp_correct", predict, dim + 1)


def logistic_family(dim: int) -> ParametricFamily:
    """r_theta(x) = 1 / (1 + exp(theta_0 + theta^T x)), init 0."""

    def predict(theta, X):
        eta = theta[0] + X @ theta[1:]
        return 1.0 / (1.0 + np.exp(np.clip(eta, -_EXP_CLIP, _EXP_CLIP)))

    return ParametricFamily("logistic_incorrect", predict, dim + 1)


def gaussian_tail_family(dim: int, threshold: float) -> ParametricFamily:
    """Upper-tail probability of a unit-variance Gaussian around a
    parameter-perturbed rugged mean surface; exact at theta = 1.

    r_theta(x) = 1 - Phi(threshold - mu_theta(x)) with

    mu_theta(x) = 20 (theta_0 - exp(-0.2 sqrt(mean_i theta_i^2 x_i^2)))
                  + theta_0 e - exp(mean_i theta_i cos(2 pi x_i)).
    """
    threshold = float(threshold)

    def predict(theta, X):
        t0 = theta[0]
        t = theta[1:]
        radial = np.sqrt(np.mean((t * t) * (X * X), axis=1))
        ripple = np.mean(t * np.cos(2.0 * np.pi * X), axis=1)
        mu = 20.0 * (t0 - np.exp(-0.2 * radial)) + (t0 * np.e - np.exp(ripple))
        return ndtr(mu - threshold)

    return ParametricFamily("normal_mu_correct", predict, dim + 1, np.ones(dim + 1))


def constant_family() -> ParametricFamily:
    """r_theta(x) = theta_0; least squares recovers the mean of y."""

    def predict(theta, X):
        return np.full(X.shape[0], theta[0])

    return ParametricFamily("constant", predict, 1)


def _clamp(values: np.ndarray, floor: float, cap: float | None) -> np.ndarray:
    out = np.maximum(values, floor)
    if cap is not None:
        out = np.minimum(out, cap)
    return out


def _sq_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances via the inner-product expansion."""
    sq = np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * (A @ B.T)
    return np.maximum(sq, 0.0)


class ParametricRegressor(RegressorMixin, BaseEstimator):
    """Least-squares fit of a parametric family by Nelder-Mead.

    The objective ``sum_i (y_i - r_theta(x_i))^2`` is minimised once from
    ``family.init`` and again from ``restarts`` random perturbations of it;
    the best run wins.  Derivative-free search keeps the fitter applicable
    to families with kinks or Phi-based tails.

    Parameters
    ----------
    family : ParametricFamily
        Model to fit.
    restarts : int
        Number of random restarts in addition to the start at family.init.
    restart_scale : float
        Standard deviation of the Gaussian perturbation applied to the
        starting point for each restart.
    fatol, xatol : float
        Nelder-Mead convergence tolerances on the objective and simplex.
    max_iter : int
        Iteration budget per start.
    floor, cap : float, optional
        Prediction clamp; set ``cap=1.0`` for probability targets.
    random_state : int, optional
        Seeds the restart perturbations.

    Attributes
    ----------
    theta_ : ndarray
        Best parameter vector found.
    residual_ss_ : float
        Objective value at ``theta_``.
    converged_ : bool
        Whether the winning run satisfied the tolerances within budget.
    """

    def __init__(self, family: ParametricFamily, restarts: int = 3,
                 restart_scale: float = 0.5, fatol: float = 1e-10,
                 xatol: float = 1e-8, max_iter: int = 2000,
                 floor: float = FLOOR_EPS, cap: float | None = None,
                 random_state: int | None = None):
        self.family = family
        self.restarts = restarts
        self.restart_scale = restart_scale
        self.fatol = fatol
        self.xatol = xatol
        self.max_iter = max_iter
        self.floor = floor
        self.cap = cap
        self.random_state = random_state

    def fit(self, X, y):
        X = as_point_matrix(X)
        y = as_vector(y, X.shape[0])
        if X.shape[0] == 0:
            raise ValueError("cannot fit on an empty dataset")
        family = self.family
        if family.param_dim < 1:
            raise ValueError("family.param_dim must be >= 1")

        def objective(theta):
            resid = y - family.predict(theta, X)
            return float(resid @ resid)

        rng = np.random.default_rng(self.random_state)
        starts = [family.init]
        for _ in range(self.restarts):
            starts.append(family.init + self.restart_scale * rng.standard_normal(family.param_dim))

        best = None
        for start in starts:
            res = minimize(objective, start, method="Nelder-Mead",
                           options={"fatol": self.fatol, "xatol": self.xatol,
                                    "maxiter": self.max_iter, "maxfev": 4 * self.max_iter})
            if best is None or res.fun < best.fun:
                best = res

        self.theta_ = np.asarray(best.x, dtype=float)
        self.residual_ss_ = float(best.fun)
        self.converged_ = bool(best.success)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = as_point_matrix(X, self.n_features_in_)
        return _clamp(self.family.predict(self.theta_, X), self.floor, self.cap)

    def predict_raw(self, X):
        """Family prediction without the clamp."""
        X = as_point_matrix(X, self.n_features_in_)
        return self.family.predict(self.theta_, X)


class KernelRegressor(RegressorMixin, BaseEstimator):
    """Nadaraya-Watson regression with an isotropic Gaussian-shape kernel.

    The prediction at x is ``sum_i y_i K((x - x_i)/h) / sum_i K((x - x_i)/h)``
    with ``K(u) = exp(-||u||^2 / 2)``.  Where the denominator underflows
    (x far from every record) the prediction falls back to the nearest
    record's response.  Output is clamped into ``[floor, cap]``.
    """

    def __init__(self, bandwidth: float = 1.0, floor: float = FLOOR_EPS,
                 cap: float | None = None):
        self.bandwidth = bandwidth
        self.floor = floor
        self.cap = cap

    def fit(self, X, y):
        check_positive(self.bandwidth, "bandwidth")
        X = as_point_matrix(X)
        y = as_vector(y, X.shape[0])
        if X.shape[0] == 0:
            raise ValueError("cannot fit on an empty dataset")
        self.X_ = X
        self.y_ = y
        self.n_features_in_ = X.shape[1]
        return self

    def _raw(self, X):
        Xi, y = self.X_, self.y_
        m = Xi.shape[0]
        xi_sq = np.sum(Xi * Xi, axis=1)
        scale = -0.5 / (self.bandwidth ** 2)
        pred = np.empty(X.shape[0])
        # Process in cache-sized row blocks; the weight matrix is the cost.
        block = max(64, 400_000 // max(m, 1))
        for start in range(0, X.shape[0], block):
            B = X[start:start + block]
            sq = np.sum(B * B, axis=1)[:, None] + xi_sq[None, :] - 2.0 * (B @ Xi.T)
            np.maximum(sq, 0.0, out=sq)
            np.multiply(sq, scale, out=sq)
            np.exp(sq, out=sq)
            denom = sq.sum(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                pred[start:start + block] = (sq @ y) / denom
            starved = denom < _DENOM_TINY
            if np.any(starved):
                far = B[starved]
                nearest = np.argmin(_sq_distances(far, Xi), axis=1)
                pred[start:start + block][starved] = y[nearest]
        return pred

    def predict(self, X):
        X = as_point_matrix(X, self.n_features_in_)
        return _clamp(self._raw(X), self.floor, self.cap)

    def predict_raw(self, X):
        """Nadaraya-Watson value without the clamp (still with the nearest-
        record fallback on denominator underflow)."""
        X = as_point_matrix(X, self.n_features_in_)
        return self._raw(X)


def fit_least_squares(family: ParametricFamily, data: Dataset,
                      **options) -> ParametricRegressor:
    """Fit ``family`` to a pilot dataset by least squares."""
    if len(data) == 0:
        raise ValueError("pilot dataset is empty")
    return ParametricRegressor(family, **options).fit(data.x, data.y)


def fit_kernel_regression(data: Dataset, bandwidth: float,
                          **options) -> KernelRegressor:
    """Fit a Nadaraya-Watson model on a pilot dataset."""
    if len(data) == 0:
        raise ValueError("pilot dataset is empty")
    return KernelRegressor(bandwidth=bandwidth, **options).fit(data.x, data.y)


def select_bandwidth_cv(X, y, grid) -> float:
    """Leave-one-out bandwidth selection over a candidate grid.

    Returns the grid value minimising ``sum_i (y_i - r_hat^(-i)(x_i))^2``;
    ties resolve to the smallest bandwidth.  A candidate is degenerate when
    every leave-one-out denominator underflows; if all candidates are
    degenerate a ``ValueError`` is raised.  Points whose own denominator
    underflows fall back to the nearest other record, mirroring prediction.
    """
    X = as_point_matrix(X)
    y = as_vector(y, X.shape[0])
    m = X.shape[0]
    if m < 10:
        raise ValueError("leave-one-out selection needs at least 10 records")
    candidates = np.unique(np.asarray(grid, dtype=float))
    if candidates.size == 0:
        raise ValueError("bandwidth grid is empty")
    if np.any(candidates <= 0.0):
        raise ValueError("bandwidths must be positive")

    sq_dist = _sq_distances(X, X)
    off_diag = ~np.eye(m, dtype=bool)
    nearest_other = np.argmin(np.where(off_diag, sq_dist, np.inf), axis=1)

    best_h = None
    best_score = np.inf
    for h in candidates:
        weights = np.exp(-0.5 * sq_dist / (h * h))
        np.fill_diagonal(weights, 0.0)
        denom = weights.sum(axis=1)
        starved = denom < _DENOM_TINY
        if np.all(starved):
            continue
        with np.errstate(invalid="ignore", divide="ignore"):
            pred = (weights @ y) / denom
        if np.any(starved):
            pred[starved] = y[nearest_other[starved]]
        score = float(np.sum((y - pred) ** 2))
        if score < best_score:
            best_score = score
            best_h = float(h)
    if best_h is None:
        raise ValueError("every candidate bandwidth is degenerate for this dataset")
    return best_h


def default_bandwidth_grid(X, num: int = 20, span: tuple = (0.05, 2.0)) -> np.ndarray:
    """Log-spaced grid on ``[span[0] * s, span[1] * s]`` where ``s`` is the
    pilot spread (coordinate standard deviation, averaged over coordinates)."""
    X = as_point_matrix(X)
    scale = float(np.mean(np.std(X, axis=0)))
    if scale <= 0.0:
        scale = 1.0
    return np.geomspace(span[0] * scale, span[1] * scale, num)


def reference_bandwidth(m: int, d: int = 1, scale: float = 1.0) -> float:
    """Plug-in bandwidth ``scale * (log m / m)^(1 / (d + 4))``."""
    m = check_count(m, "m", minimum=2)
    d = check_count(d, "d", minimum=1)
    check_positive(scale, "scale")
    return scale * (math.log(m) / m) ** (1.0 / (d + 4))
