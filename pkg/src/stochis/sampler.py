"""Construction of and exact sampling from the estimated optimal density.

Given a fitted regression r_hat and the natural configuration density p,
the variance-minimising sampling density is

    q(x) = sqrt(r_hat(x)) * p(x) / C,   C = integral of sqrt(r_hat) * p.

The normalizer C is computed once at build time (adaptive quadrature in low
dimension, Monte Carlo otherwise) and samples are drawn exactly by
acceptance-rejection with p as the envelope: propose X ~ p, accept with
probability sqrt(r_hat(X)) / M for a bound M >= sup sqrt(r_hat).  For
probability targets r_hat <= 1, so M = 1.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import Box, Density
from .regress import FLOOR_EPS
from .validation import as_point_matrix, check_count, check_positive

__all__ = [
    "NormalizerSpec",
    "NormalizerResult",
    "AcceptRejectStats",
    "AcceptanceStarvationError",
    "ISDensity",
    "estimate_normalizer",
    "empirical_sqrt_bound",
    "build_is_density",
    "sample_accept_reject",
    "importance_weight",
    "oracle_density",
]

# Acceptance-rejection gives up below this rate once the proposal budget
# is exhausted.
_MIN_ACCEPT_RATE = 1e-6
_MAX_PROPOSALS = 10 ** 7


class AcceptanceStarvationError(RuntimeError):
    """Raised when the acceptance rate collapses; carries the observed stats."""

    def __init__(self, stats):
        self.stats = stats
        super().__init__(
            f"acceptance rate {stats.acceptance_rate:.3g} below {_MIN_ACCEPT_RATE:g} "
            f"after {stats.proposals} proposals")


@dataclass(frozen=True)
class NormalizerSpec:
    """How to integrate sqrt(r_hat) * p.

    ``method`` is ``"quadrature"``, ``"monte_carlo"`` or ``"auto"`` (adaptive
    quadrature for d <= 2, Monte Carlo above).  Monte Carlo uses ``mc_size``
    draws from p and requires at least 1e5 of them.
    """

    method: str = "auto"
    mc_size: int = 10 ** 6
    rel_tol: float = 1e-6

    def resolve(self, dim: int) -> str:
        if self.method == "auto":
            return "quadrature" if dim <= 2 else "monte_carlo"
        if self.method not in ("quadrature", "monte_carlo"):
            raise ValueError(f"unknown normalizer method {self.method!r}")
        return self.method


@dataclass(frozen=True)
class NormalizerResult:
    value: float
    stderr: float | None
    method: str
    fell_back: bool = False


@dataclass
class AcceptRejectStats:
    proposals: int = 0
    accepted: int = 0
    envelope_violations: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


def _monte_carlo_normalizer(rhat, p: Density, size: int,
                            rng: np.random.Generator) -> NormalizerResult:
    size = check_count(size, "mc_size", minimum=10 ** 5)
    X = p.sample(rng, size)
    values = np.sqrt(np.asarray(rhat(X), dtype=float))
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(size))
    return NormalizerResult(mean, stderr, "monte_carlo")


def _quadrature_normalizer(rhat, p: Density, rel_tol: float) -> NormalizerResult:
    box = p.integration_box()
    if p.dim == 1:
        lo, hi = float(box.lower[0]), float(box.upper[0])

        def integrand(x):
            pt = np.array([[x]])
            return float(np.sqrt(rhat(pt))[0] * p.pdf(pt)[0])

        value, _ = integrate.quad(integrand, lo, hi, epsabs=1e-12,
                                  epsrel=rel_tol, limit=500)
    else:

        def integrand(x2, x1):
            pt = np.array([[x1, x2]])
            return float(np.sqrt(rhat(pt))[0] * p.pdf(pt)[0])

        value, _ = integrate.dblquad(
            integrand, float(box.lower[0]), float(box.upper[0]),
            float(box.lower[1]), float(box.upper[1]),
            epsabs=1e-10, epsrel=rel_tol)
    return NormalizerResult(float(value), None, "quadrature")


def estimate_normalizer(rhat, p: Density, spec: NormalizerSpec | None = None,
                        rng: np.random.Generator | None = None) -> NormalizerResult:
    """Integrate sqrt(r_hat) * p over the support of p.

    Quadrature that fails to converge falls back to Monte Carlo with a
    warning rather than erroring.
    """
    spec = spec or NormalizerSpec()
    method = spec.resolve(p.dim)
    if method == "quadrature":
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", integrate.IntegrationWarning)
                return _quadrature_normalizer(rhat, p, spec.rel_tol)
        except integrate.IntegrationWarning:
            warnings.warn("quadrature did not converge; falling back to Monte Carlo",
                          RuntimeWarning, stacklevel=2)
            rng = rng if rng is not None else np.random.default_rng(0)
            result = _monte_carlo_normalizer(rhat, p, spec.mc_size, rng)
            return NormalizerResult(result.value, result.stderr, result.method, True)
    rng = rng if rng is not None else np.random.default_rng(0)
    return _monte_carlo_normalizer(rhat, p, spec.mc_size, rng)


def empirical_sqrt_bound(rhat, p: Density, pilot_x: np.ndarray | None = None,
                         rng: np.random.Generator | None = None,
                         fresh: int = 10 ** 4, safety: float = 1.2) -> float:
    """Safety-factored empirical bound on sup sqrt(r_hat).

    Evaluates sqrt(r_hat) on the pilot configurations plus ``fresh`` new
    draws from p and scales the maximum by ``safety``.  Used when no hard
    bound (such as r_hat <= 1) is available.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    candidates = [p.sample(rng, fresh)]
    if pilot_x is not None and len(pilot_x):
        candidates.append(as_point_matrix(pilot_x, p.dim))
    X = np.vstack(candidates)
    return safety * float(np.sqrt(np.asarray(rhat(X), dtype=float)).max())


class ISDensity:
    """The sampling density proportional to sqrt(r_hat) * p.

    Carries the cached normalizer C, the envelope bound M for
    acceptance-rejection, and the importance weight p / q = C / sqrt(r_hat).
    With a defensive mixing weight delta > 0 the density becomes
    ``(1 - delta) q + delta p``, which tames tail weights at the cost of a
    slightly less aggressive sampler; the default is no mixing.

    ``rhat`` must be strictly positive on the support of p (regression
    predictions are floor-clamped for exactly this reason) so weights stay
    finite everywhere.
    """

    def __init__(self, base_p: Density, rhat, normalizer: float,
                 sqrt_bound: float, mix_weight: float = 0.0,
                 normalizer_info: NormalizerResult | None = None):
        if not np.isfinite(normalizer) or normalizer <= 0.0:
            raise ValueError(f"normalizer must be positive and finite, got {normalizer}")
        check_positive(sqrt_bound, "sqrt_bound")
        if not 0.0 <= mix_weight < 1.0:
            raise ValueError("mix_weight must lie in [0, 1)")
        self.base_p = base_p
        self.rhat = rhat
        self.normalizer = float(normalizer)
        self.sqrt_bound = float(sqrt_bound)
        self.mix_weight = float(mix_weight)
        self.normalizer_info = normalizer_info

    @property
    def dim(self) -> int:
        return self.base_p.dim

    @property
    def support(self) -> Box:
        return self.base_p.support

    def sqrt_rhat(self, X) -> np.ndarray:
        X = as_point_matrix(X, self.dim)
        return np.sqrt(np.asarray(self.rhat(X), dtype=float))

    def pdf(self, X) -> np.ndarray:
        X = as_point_matrix(X, self.dim)
        core = self.sqrt_rhat(X) * self.base_p.pdf(X) / self.normalizer
        if self.mix_weight:
            return (1.0 - self.mix_weight) * core + self.mix_weight * self.base_p.pdf(X)
        return core

    def log_pdf(self, X) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(X))

    def weight(self, X) -> np.ndarray:
        """Importance weight p(x) / q(x); finite thanks to the floor clamp."""
        ratio = self.sqrt_rhat(X) / self.normalizer
        if self.mix_weight:
            return 1.0 / ((1.0 - self.mix_weight) * ratio + self.mix_weight)
        return 1.0 / ratio


def build_is_density(rhat, p: Density, spec: NormalizerSpec | None = None,
                     rng: np.random.Generator | None = None,
                     sqrt_bound: float | None = None,
                     pilot_x: np.ndarray | None = None,
                     mix_weight: float = 0.0,
                     known_normalizer: float | None = None) -> ISDensity:
    """Assemble the sampling density from a fitted r_hat and the base p.

    ``sqrt_bound`` should be 1.0 for probability targets (capped r_hat);
    when omitted it is estimated empirically from the pilot configurations
    and fresh draws.  ``known_normalizer`` skips integration when C is
    available in closed form.
    """
    if known_normalizer is not None:
        info = NormalizerResult(float(known_normalizer), None, "closed_form")
    else:
        info = estimate_normalizer(rhat, p, spec, rng)
    if not np.isfinite(info.value) or info.value <= 0.0:
        raise ValueError(f"normalizer estimate {info.value} is not usable")
    if sqrt_bound is None:
        sqrt_bound = empirical_sqrt_bound(rhat, p, pilot_x, rng)
    return ISDensity(p, rhat, info.value, sqrt_bound, mix_weight, info)


def sample_accept_reject(isd: ISDensity, rng: np.random.Generator, count: int,
                         return_sqrt_rhat: bool = False):
    """Draw ``count`` exact samples from ``isd`` using p as the envelope.

    Proposals X ~ p are accepted with probability sqrt(r_hat(X)) / M.  If
    the running acceptance rate stays below 1e-6 once 1e7 proposals have
    been spent, :class:`AcceptanceStarvationError` is raised.

    With ``return_sqrt_rhat`` (only meaningful without defensive mixing)
    the sqrt(r_hat) values of the accepted draws are returned as a third
    element, saving the caller a second pass over the regression model
    when computing importance weights.
    """
    count = check_count(count, "count")
    stats = AcceptRejectStats()
    if return_sqrt_rhat and isd.mix_weight:
        raise ValueError("sqrt_rhat reuse is not available with a defensive mixture")
    if count == 0:
        empty = np.empty((0, isd.dim))
        return (empty, stats, np.empty(0)) if return_sqrt_rhat else (empty, stats)

    n_direct = 0
    if isd.mix_weight:
        n_direct = int(rng.binomial(count, isd.mix_weight))
    n_ar = count - n_direct

    accepted: list[np.ndarray] = []
    accepted_values: list[np.ndarray] = []
    remaining = n_ar
    # Expected acceptance rate is C / M; start close to the implied budget.
    rate_guess = min(max(isd.normalizer / isd.sqrt_bound, 1e-3), 1.0)
    chunk = max(256, int(1.2 * remaining / rate_guess))
    while remaining > 0:
        proposals = isd.base_p.sample(rng, chunk)
        values = isd.sqrt_rhat(proposals)
        acc_prob = values / isd.sqrt_bound
        over = acc_prob > 1.0
        if np.any(over):
            stats.envelope_violations += int(over.sum())
            acc_prob = np.minimum(acc_prob, 1.0)
        keep = rng.uniform(size=chunk) < acc_prob
        taken = proposals[keep]
        stats.proposals += chunk
        stats.accepted += int(keep.sum())
        if len(taken):
            accepted.append(taken[:remaining])
            accepted_values.append(values[keep][:remaining])
            remaining -= min(len(taken), remaining)
        if remaining > 0 and stats.proposals >= _MAX_PROPOSALS \
                and stats.acceptance_rate < _MIN_ACCEPT_RATE:
            raise AcceptanceStarvationError(stats)
        rate = max(stats.acceptance_rate, 1e-3)
        chunk = max(256, int(1.2 * remaining / rate))

    draws = np.vstack(accepted) if accepted else np.empty((0, isd.dim))
    if n_direct:
        direct = isd.base_p.sample(rng, n_direct)
        draws = np.vstack([draws, direct])[rng.permutation(count)]
    if return_sqrt_rhat:
        values = np.concatenate(accepted_values) if accepted_values else np.empty(0)
        return draws, stats, values
    return draws, stats


def importance_weight(isd: ISDensity, x) -> float | np.ndarray:
    """Weight p(x) / q(x) at a point (float) or batch (array)."""
    single = np.asarray(x, dtype=float).ndim <= 1
    w = isd.weight(x)
    return float(w[0]) if single else w


def oracle_density(scenario, spec: NormalizerSpec | None = None,
                   rng: np.random.Generator | None = None) -> ISDensity:
    """Sampling density built from a scenario's true r; benchmarking only.

    Requires the scenario to expose a closed-form or computable ``true_r``;
    uses the scenario's exact normalizer when one is known.
    """
    if getattr(scenario, "true_r", None) is None:
        raise ValueError(f"scenario {getattr(scenario, 'name', '?')!r} has no true r")
    cap = 1.0 if scenario.outcome.is_probability else None

    def rhat(X):
        values = np.maximum(np.asarray(scenario.true_r(X), dtype=float), FLOOR_EPS)
        return np.minimum(values, cap) if cap is not None else values

    sqrt_bound = 1.0 if scenario.outcome.is_probability else None
    return build_is_density(rhat, scenario.p, spec=spec, rng=rng,
                            sqrt_bound=sqrt_bound,
                            known_normalizer=scenario.oracle_normalizer)
