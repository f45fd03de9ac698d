"""Domain primitives: configuration densities, simulators, outcome functions.

A configuration is a point ``x`` in R^d drawn by nature from a known density
``p``.  A stochastic simulator maps a configuration to a random scalar output
``V(x)``.  An outcome function ``g`` turns the output into the quantity whose
expectation ``E[g(V(X))]`` is being estimated.

Conventions
-----------
* Points are 1-D float arrays of length ``d``; batches are ``(k, d)`` arrays.
* All randomness flows through an explicit ``numpy.random.Generator``.  Each
  replication of an experiment gets an independent stream derived from the
  master seed and the replication index (:func:`replication_rng`), so serial
  and parallel execution produce identical results.
* Density, model and outcome objects are immutable after construction and
  safe to share across threads or processes; generators are never shared.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .validation import as_point_matrix, as_vector, check_count, check_positive

__all__ = [
    "Box",
    "Density",
    "StandardNormal",
    "IndependentExponential",
    "BoxUniform",
    "TruncatedRayleigh",
    "StochasticModel",
    "GaussianMeanModel",
    "SumRateExponentialModel",
    "DeterministicModel",
    "ackley_mean",
    "OutcomeSpec",
    "indicator_above",
    "identity_outcome",
    "outcome_g",
    "PilotRecord",
    "Dataset",
    "make_pilot_dataset",
    "eval_pdf",
    "sample_density",
    "simulate",
    "replication_rng",
    "density_from_config",
    "model_from_config",
    "outcome_from_config",
]


def replication_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent generator for replication ``index`` under ``master_seed``.

    Streams are derived by seed-sequence spawning, so they do not depend on
    the order replications are executed in.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))


@dataclass(frozen=True)
class Box:
    """Axis-aligned support descriptor; bounds may be infinite."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise ValueError("box bounds must have equal length")
        if np.any(lower >= upper):
            raise ValueError("box lower bounds must be strictly below upper bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, X: np.ndarray) -> np.ndarray:
        X = as_point_matrix(X, self.dim)
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)


class Density:
    """A probability density on R^d that can be evaluated and sampled.

    Subclasses provide ``log_pdf`` (vectorised over rows, ``-inf`` outside
    the support), ``sample``, the exact ``support`` box, and a finite
    ``integration_box`` covering all but a negligible (< 1e-12) tail mass,
    used by quadrature and envelope checks.
    """

    dim: int
    support: Box

    def log_pdf(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, X: np.ndarray) -> np.ndarray:
        return np.exp(self.log_pdf(X))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def integration_box(self) -> Box:
        raise NotImplementedError


class StandardNormal(Density):
    """Product of ``dim`` independent standard normal coordinates."""

    def __init__(self, dim: int = 1):
        self.dim = check_count(dim, "dim", minimum=1)
        inf = np.full(self.dim, np.inf)
        self.support = Box(-inf, inf)

    def log_pdf(self, X):
        X = as_point_matrix(X, self.dim)
        return -0.5 * np.sum(X * X, axis=1) - 0.5 * self.dim * math.log(2.0 * math.pi)

    def sample(self, rng, size):
        size = check_count(size, "size")
        return rng.standard_normal((size, self.dim))

    def integration_box(self):
        # +-12 sigma leaves ~4e-33 mass per coordinate outside.
        return Box(np.full(self.dim, -12.0), np.full(self.dim, 12.0))


class IndependentExponential(Density):
    """Product of ``dim`` independent exponential coordinates with one rate."""

    def __init__(self, rate: float = 1.0, dim: int = 1):
        self.rate = check_positive(rate, "rate")
        self.dim = check_count(dim, "dim", minimum=1)
        self.support = Box(np.zeros(self.dim), np.full(self.dim, np.inf))

    def log_pdf(self, X):
        X = as_point_matrix(X, self.dim)
        out = self.dim * math.log(self.rate) - self.rate * np.sum(X, axis=1)
        return np.where(np.all(X >= 0.0, axis=1), out, -np.inf)

    def sample(self, rng, size):
        size = check_count(size, "size")
        return rng.exponential(1.0 / self.rate, (size, self.dim))

    def integration_box(self):
        hi = -math.log(1e-14) / self.rate
        return Box(np.zeros(self.dim), np.full(self.dim, hi))


class BoxUniform(Density):
    """Uniform density on an axis-aligned box."""

    def __init__(self, lower, upper):
        self.support = Box(np.atleast_1d(lower), np.atleast_1d(upper))
        self.dim = self.support.dim
        self._log_density = -float(np.sum(np.log(self.support.upper - self.support.lower)))

    def log_pdf(self, X):
        X = as_point_matrix(X, self.dim)
        inside = self.support.contains(X)
        return np.where(inside, self._log_density, -np.inf)

    def sample(self, rng, size):
        size = check_count(size, "size")
        return rng.uniform(self.support.lower, self.support.upper, (size, self.dim))

    def integration_box(self):
        return self.support


class TruncatedRayleigh(Density):
    """Rayleigh density restricted to ``[low, high]``, sampled by inversion.

    One-dimensional; the stock configuration density for wind-speed style
    inputs (default scale ``10 * sqrt(2/pi)`` on support [3, 25]).
    """

    def __init__(self, scale: float = 10.0 * math.sqrt(2.0 / math.pi),
                 low: float = 3.0, high: float = 25.0):
        self.scale = check_positive(scale, "scale")
        if not 0.0 <= low < high:
            raise ValueError("require 0 <= low < high")
        self.low = float(low)
        self.high = float(high)
        self.dim = 1
        self.support = Box(np.array([self.low]), np.array([self.high]))
        self._cdf_low = self._cdf(self.low)
        self._mass = self._cdf(self.high) - self._cdf_low
        if self._mass <= 0.0:
            raise ValueError("truncation interval carries no mass")

    def _cdf(self, x: float) -> float:
        return 1.0 - math.exp(-0.5 * (x / self.scale) ** 2)

    def log_pdf(self, X):
        X = as_point_matrix(X, 1)
        x = X[:, 0]
        with np.errstate(divide="ignore"):
            raw = np.log(x) - 2.0 * math.log(self.scale) - 0.5 * (x / self.scale) ** 2
        inside = (x >= self.low) & (x <= self.high)
        return np.where(inside, raw - math.log(self._mass), -np.inf)

    def sample(self, rng, size):
        size = check_count(size, "size")
        u = self._cdf_low + self._mass * rng.uniform(size=size)
        x = self.scale * np.sqrt(-2.0 * np.log1p(-u))
        return x.reshape(size, 1)

    def integration_box(self):
        return self.support


def eval_pdf(density: Density, x) -> float | np.ndarray:
    """Density value at ``x``; zero outside the support.

    A single point returns a float, a batch returns an array.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1
    values = density.pdf(as_point_matrix(X, density.dim))
    return float(values[0]) if single else values


def sample_density(density: Density, rng: np.random.Generator, count: int) -> np.ndarray:
    """Draw ``count`` i.i.d. points from ``density`` as a (count, d) array."""
    return density.sample(rng, check_count(count, "count"))


class StochasticModel:
    """Black-box simulator: one random scalar output per configuration.

    ``draw`` is vectorised: given a ``(k, d)`` batch it returns ``k`` outputs,
    consuming the generator deterministically so identical generator states
    reproduce identical outputs.
    """

    dim: int

    def draw(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class GaussianMeanModel(StochasticModel):
    """Simulator whose output is normal around a configuration-dependent mean."""

    def __init__(self, mean_fn, dim: int, noise_sd: float = 1.0):
        self.mean_fn = mean_fn
        self.dim = check_count(dim, "dim", minimum=1)
        self.noise_sd = check_positive(noise_sd, "noise_sd")

    def draw(self, X, rng):
        X = as_point_matrix(X, self.dim)
        mu = np.asarray(self.mean_fn(X), dtype=float)
        return mu + self.noise_sd * rng.standard_normal(X.shape[0])


def ackley_mean(X: np.ndarray) -> np.ndarray:
    """Rugged multimodal mean surface (Ackley-style), zero at the origin."""
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    radial = np.sqrt(np.sum(X * X, axis=1) / d)
    ripple = np.mean(np.cos(2.0 * np.pi * X), axis=1)
    return 20.0 * (1.0 - np.exp(-0.2 * radial)) + (np.e - np.exp(ripple))


class SumRateExponentialModel(StochasticModel):
    """Simulator with exponential output of mean ``1 / sum(x)``."""

    def __init__(self, dim: int):
        self.dim = check_count(dim, "dim", minimum=1)

    def draw(self, X, rng):
        X = as_point_matrix(X, self.dim)
        rate = np.maximum(np.sum(X, axis=1), 1e-300)
        return rng.exponential(1.0 / rate)


class DeterministicModel(StochasticModel):
    """Wrap a deterministic response; Var(V | x) = 0 for every x."""

    def __init__(self, fn, dim: int):
        self.fn = fn
        self.dim = check_count(dim, "dim", minimum=1)

    def draw(self, X, rng):
        X = as_point_matrix(X, self.dim)
        return np.asarray(self.fn(X), dtype=float).reshape(X.shape[0])


def simulate(model: StochasticModel, x, rng: np.random.Generator) -> float:
    """Run the simulator once at a single configuration."""
    X = as_point_matrix(x, model.dim)
    if X.shape[0] != 1:
        raise ValueError("simulate takes a single configuration; use model.draw for batches")
    return float(model.draw(X, rng)[0])


@dataclass(frozen=True)
class OutcomeSpec:
    """Outcome function g applied to simulator output.

    ``indicator_above``: g(v) = 1 when v is strictly above the threshold
    (ties count as no event).  ``identity``: g(v) = v.
    """

    kind: str
    threshold: float | None = None

    def __post_init__(self):
        if self.kind == "indicator_above":
            if self.threshold is None or not np.isfinite(self.threshold):
                raise ValueError("indicator_above requires a finite threshold")
        elif self.kind == "identity":
            if self.threshold is not None:
                raise ValueError("identity outcome takes no threshold")
        else:
            raise ValueError(f"unknown outcome kind {self.kind!r}")

    @property
    def is_probability(self) -> bool:
        """True when g is an indicator, so E[g] is a probability and g^2 = g."""
        return self.kind == "indicator_above"

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "indicator_above":
            return (v > self.threshold).astype(float)
        return v


def indicator_above(threshold: float) -> OutcomeSpec:
    return OutcomeSpec("indicator_above", float(threshold))


def identity_outcome() -> OutcomeSpec:
    return OutcomeSpec("identity")


def outcome_g(spec: OutcomeSpec, v) -> float | np.ndarray:
    """Evaluate g(v); scalar in, scalar out."""
    out = spec(v)
    return float(out) if np.ndim(v) == 0 else out


@dataclass(frozen=True)
class PilotRecord:
    """One pilot observation: configuration, raw output, squared outcome."""

    x: np.ndarray
    v: float
    y: float
    log_q_at_x: float


@dataclass(frozen=True)
class Dataset:
    """Pilot sample as column arrays: x (m, d), v, y = g(v)^2, log q0(x)."""

    x: np.ndarray
    v: np.ndarray
    y: np.ndarray
    log_q: np.ndarray = field(default=None)

    def __post_init__(self):
        x = as_point_matrix(self.x)
        m = x.shape[0]
        v = as_vector(self.v, m, "v")
        y = as_vector(self.y, m, "y")
        if np.any(y < 0.0):
            raise ValueError("squared outcomes y must be nonnegative")
        log_q = self.log_q
        if log_q is None:
            log_q = np.zeros(m)
        else:
            log_q = np.asarray(log_q, dtype=float).reshape(-1)
            if log_q.shape[0] != m:
                raise ValueError("log_q length must match the number of records")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "log_q", log_q)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def records(self):
        for i in range(len(self)):
            yield PilotRecord(self.x[i], float(self.v[i]), float(self.y[i]),
                              float(self.log_q[i]))


def make_pilot_dataset(X: np.ndarray, V: np.ndarray, outcome: OutcomeSpec,
                       log_q: np.ndarray | None = None) -> Dataset:
    """Assemble a pilot dataset, computing y = g(v)^2 from the outcome spec."""
    g = outcome(V)
    return Dataset(x=X, v=V, y=g * g, log_q=log_q)


# ---------------------------------------------------------------------------
# JSON-friendly constructors


def density_from_config(cfg: dict) -> Density:
    """Build a density from a configuration mapping with a ``kind`` key."""
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "normal":
        return StandardNormal(dim=cfg.pop("dim", 1))
    if kind == "exponential":
        return IndependentExponential(rate=cfg.pop("rate", 1.0), dim=cfg.pop("dim", 1))
    if kind == "uniform":
        return BoxUniform(cfg.pop("lower"), cfg.pop("upper"))
    if kind == "truncated_rayleigh":
        return TruncatedRayleigh(
            scale=cfg.pop("scale", 10.0 * math.sqrt(2.0 / math.pi)),
            low=cfg.pop("low", 3.0), high=cfg.pop("high", 25.0))
    raise ValueError(f"unknown density kind {kind!r}")


def model_from_config(cfg: dict) -> StochasticModel:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "gaussian_ackley":
        dim = cfg.pop("dim", 1)
        return GaussianMeanModel(ackley_mean, dim=dim, noise_sd=cfg.pop("noise_sd", 1.0))
    if kind == "exponential_sum_rate":
        return SumRateExponentialModel(dim=cfg.pop("dim", 1))
    raise ValueError(f"unknown model kind {kind!r}")


def outcome_from_config(cfg: dict) -> OutcomeSpec:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "indicator_above":
        return indicator_above(cfg.pop("threshold"))
    if kind == "identity":
        return identity_outcome()
    raise ValueError(f"unknown outcome kind {kind!r}")
