"""Two-stage importance sampling for stochastic simulation models.

Estimate E[g(V(X))] where X follows a known configuration density and V(x)
is the random output of a black-box simulator, using a pilot regression of
g^2(V) on X to build a near-optimal sampling density for the remaining
simulation budget.
"""

from .alloc import AllocationPolicy, nonparametric_allocation, parametric_allocation
from .core import (
    BoxUniform,
    Dataset,
    Density,
    DeterministicModel,
    GaussianMeanModel,
    IndependentExponential,
    OutcomeSpec,
    PilotRecord,
    StandardNormal,
    StochasticModel,
    SumRateExponentialModel,
    TruncatedRayleigh,
    ackley_mean,
    eval_pdf,
    identity_outcome,
    indicator_above,
    make_pilot_dataset,
    outcome_g,
    replication_rng,
    sample_density,
    simulate,
)
from .estimator import (
    EstimateReport,
    StageSample,
    cmc_estimate,
    ess,
    ess_g,
    oracle_variance,
    two_stage_estimate,
    weighted_combination,
)
from .regress import (
    KernelRegressor,
    ParametricFamily,
    ParametricRegressor,
    default_bandwidth_grid,
    exp_linear_family,
    fit_kernel_regression,
    fit_least_squares,
    gaussian_tail_family,
    logistic_family,
    reference_bandwidth,
    select_bandwidth_cv,
)
from .runner import (
    ExperimentResult,
    ReplicationRecord,
    aggregate,
    computational_saving,
    run_cell,
    run_experiment,
    run_replication,
)
from .sampler import (
    AcceptanceStarvationError,
    AcceptRejectStats,
    ISDensity,
    NormalizerSpec,
    build_is_density,
    estimate_normalizer,
    importance_weight,
    oracle_density,
    sample_accept_reject,
)
from .scenarios import (
    Scenario,
    get_scenario,
    make_exp_exp,
    make_normal_normal,
    scenario_from_config,
)

__version__ = "0.1.0"
