"""Replication engine: run sampling pipelines over seeds, aggregate errors.

One replication executes a full pipeline for its scenario's sampler kind:

* ``cmc``            -- draw the whole budget from p, unit weights;
* ``oracle``         -- draw the whole budget from the density built on the
                        true r (benchmark for the attainable variance);
* ``param_correct``, ``param_incorrect``, ``nonparam`` -- two stages: pilot
  draws from q0, fit r_hat, build the estimated optimal density, spend the
  remaining budget there, pool both stages.

Every replication owns an independent generator derived from the master
seed, so results are identical whether cells run serially or on a worker
pool.  Wall-clock time is recorded per replication but is, of course, not
reproducible; all other outputs are.
"""

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .alloc import AllocationPolicy
from .core import make_pilot_dataset, replication_rng
from .estimator import EstimateReport, StageSample, cmc_estimate, two_stage_estimate
from .regress import (
    KernelRegressor,
    ParametricRegressor,
    default_bandwidth_grid,
    select_bandwidth_cv,
)
from .sampler import (
    AcceptanceStarvationError,
    NormalizerSpec,
    build_is_density,
    sample_accept_reject,
)
from .scenarios import SAMPLER_KINDS, Scenario, scenario_from_config, scenario_from_spec

__all__ = [
    "ReplicationRecord",
    "ExperimentResult",
    "run_replication",
    "run_cell",
    "aggregate",
    "computational_saving",
    "run_experiment",
    "validate_config",
    "RECORD_COLUMNS",
]

RECORD_COLUMNS = ("scenario", "seed", "sampler", "n", "m", "d", "estimate",
                  "stderr", "ess", "ess_g", "excluded", "flags", "wall_ms")


@dataclass(frozen=True)
class ReplicationRecord:
    """Flat per-replication result row."""

    scenario: str
    sampler: str
    seed: int
    n: int
    m: int
    d: int
    estimate: float
    stderr: float
    ess: float
    ess_g: float
    excluded: bool
    flags: str
    wall_ms: float
    report: EstimateReport | None = field(default=None, repr=False, compare=False)

    def to_row(self) -> list:
        return [self.scenario, self.seed, self.sampler, self.n, self.m, self.d,
                repr(self.estimate), repr(self.stderr), repr(self.ess),
                repr(self.ess_g), int(self.excluded), self.flags,
                f"{self.wall_ms:.3f}"]


def _two_stage_pipeline(scenario: Scenario, n: int, m: int,
                        rng: np.random.Generator,
                        normalizer: NormalizerSpec | None,
                        mix_weight: float) -> tuple[EstimateReport, list]:
    outcome = scenario.outcome
    cap = 1.0 if outcome.is_probability else None
    flags = []

    X1 = scenario.q0.sample(rng, m)
    V1 = scenario.model.draw(X1, rng)
    g1 = outcome(V1)
    w1 = np.exp(scenario.p.log_pdf(X1) - scenario.q0.log_pdf(X1))
    pilot = make_pilot_dataset(X1, V1, outcome, scenario.q0.log_pdf(X1))

    if scenario.sampler == "nonparam":
        bandwidth = select_bandwidth_cv(pilot.x, pilot.y, default_bandwidth_grid(pilot.x))
        reg = KernelRegressor(bandwidth=bandwidth, cap=cap).fit(pilot.x, pilot.y)
    else:
        family = scenario.correct_family if scenario.sampler == "param_correct" \
            else scenario.incorrect_family
        if family is None:
            raise ValueError(f"scenario {scenario.name!r} has no family for "
                             f"sampler {scenario.sampler!r}")
        reg = ParametricRegressor(family, cap=cap,
                                  random_state=int(rng.integers(2 ** 63)))
        reg.fit(pilot.x, pilot.y)
        if not reg.converged_:
            flags.append("fit_not_converged")

    stage1 = StageSample(X1, V1, g1, w1, "q0")
    sqrt_bound = 1.0 if outcome.is_probability else None
    isd = build_is_density(reg.predict, scenario.p, spec=normalizer, rng=rng,
                           sqrt_bound=sqrt_bound, pilot_x=X1,
                           mix_weight=mix_weight)
    if isd.normalizer_info is not None and isd.normalizer_info.fell_back:
        flags.append("normalizer_fallback")
    try:
        if mix_weight:
            X2, stats = sample_accept_reject(isd, rng, n - m)
            w2 = isd.weight(X2)
        else:
            X2, stats, sqrt_vals = sample_accept_reject(isd, rng, n - m,
                                                        return_sqrt_rhat=True)
            w2 = isd.normalizer / sqrt_vals
    except AcceptanceStarvationError:
        flags.append("acceptance_starved")
        report = two_stage_estimate(stage1, StageSample.empty(scenario.d, "qstar"))
        return report, flags
    if stats.envelope_violations:
        flags.append("envelope_violations")

    V2 = scenario.model.draw(X2, rng)
    g2 = outcome(V2)
    stage2 = StageSample(X2, V2, g2, w2, "qstar")
    return two_stage_estimate(stage1, stage2), flags


def run_replication(scenario: Scenario, n: int, policy: AllocationPolicy | None = None,
                    seed: int = 0, normalizer: NormalizerSpec | None = None,
                    mix_weight: float = 0.0) -> ReplicationRecord:
    """Execute one replication of the scenario's sampler pipeline.

    The result is a pure function of ``(scenario, n, policy, seed)``:
    rerunning with the same arguments reproduces the record bit for bit
    (apart from the wall-clock field).
    """
    if n < 2:
        raise ValueError("budget n must be at least 2")
    if scenario.sampler not in SAMPLER_KINDS:
        raise ValueError(f"unknown sampler kind {scenario.sampler!r}")
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    outcome = scenario.outcome
    flags: list = []

    if scenario.sampler == "cmc":
        X = scenario.p.sample(rng, n)
        V = scenario.model.draw(X, rng)
        report = cmc_estimate(StageSample(X, V, outcome(V), np.ones(n), "p"))
        m = 0
    elif scenario.sampler == "oracle":
        isd = scenario.oracle_isdensity()
        X, _ = sample_accept_reject(isd, rng, n)
        V = scenario.model.draw(X, rng)
        stage2 = StageSample(X, V, outcome(V), isd.weight(X), "oracle")
        report = two_stage_estimate(StageSample.empty(scenario.d), stage2)
        m = 0
    else:
        policy = policy or AllocationPolicy.for_sampler(scenario.sampler)
        m = policy.allocate(n, scenario.d)
        report, flags = _two_stage_pipeline(scenario, n, m, rng, normalizer, mix_weight)

    excluded = bool(outcome.is_probability and report.estimate > 1.0)
    if excluded:
        flags = list(flags) + ["estimate_above_one"]
    wall_ms = (time.perf_counter() - start) * 1000.0
    return ReplicationRecord(
        scenario=scenario.name, sampler=scenario.sampler, seed=int(seed),
        n=int(n), m=int(m), d=scenario.d, estimate=report.estimate,
        stderr=report.stderr, ess=report.ess, ess_g=report.ess_g,
        excluded=excluded, flags="|".join(list(report.flags) + list(flags)),
        wall_ms=wall_ms, report=report)


def _replication_seed(master_seed: int, cell_index: int, rep_index: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(cell_index, rep_index))
    return int(ss.generate_state(1, np.uint64)[0])


def _cell_chunk(args) -> list:
    spec, n, policy, seeds, normalizer, mix_weight = args
    scenario = scenario_from_spec(spec)
    return [run_replication(scenario, n, policy, seed, normalizer, mix_weight)
            for seed in seeds]


def run_cell(scenario: Scenario, n: int, reps: int, master_seed: int = 0,
             cell_index: int = 0, policy: AllocationPolicy | None = None,
             workers: int = 1, normalizer: NormalizerSpec | None = None,
             mix_weight: float = 0.0) -> list:
    """Run ``reps`` replications of one (scenario, sampler, n) cell.

    Replication seeds depend only on (master_seed, cell_index, index), so
    the output is identical for any worker count.
    """
    seeds = [_replication_seed(master_seed, cell_index, i) for i in range(reps)]
    policy = policy or AllocationPolicy.for_sampler(scenario.sampler)
    if workers <= 1 or reps < 4:
        scenario.oracle_isdensity() if scenario.sampler == "oracle" else None
        return [run_replication(scenario, n, policy, seed, normalizer, mix_weight)
                for seed in seeds]
    spec = scenario.to_spec()
    chunk_count = min(reps, workers * 4)
    chunks = [seeds[i::chunk_count] for i in range(chunk_count)]
    tasks = [(spec, n, policy, chunk, normalizer, mix_weight) for chunk in chunks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        partials = list(pool.map(_cell_chunk, tasks))
    by_seed = {record.seed: record for part in partials for record in part}
    return [by_seed[seed] for seed in seeds]


@dataclass(frozen=True)
class ExperimentResult:
    """Aggregated cell summary: scaled mean squared error and diagnostics."""

    scenario: str
    sampler: str
    n: int
    d: int
    replications: int
    nmse: float
    nmse_ci_lo: float
    nmse_ci_hi: float
    mean_estimate: float
    sd_estimate: float
    saving: float | None
    exclusions: int
    flagged: int
    e_true: float
    v_min: float
    ess_g_q10: float
    ess_g_q50: float
    ess_g_q90: float
    mean_m: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def aggregate(records: list, e_true: float, v_min: float = float("nan")) -> ExperimentResult:
    """Summarise one cell's replications against the true estimand.

    ``nmse`` is n times the mean squared error over the retained
    replications, with a delta-method normal confidence interval on the
    mean of squared errors.  Probability-target estimates above one are
    excluded (their count is reported); excluding every record is an error.
    """
    if not records:
        raise ValueError("no records to aggregate")
    ns = {r.n for r in records}
    if len(ns) != 1:
        raise ValueError(f"records mix budgets {sorted(ns)}")
    n = ns.pop()
    kept = [r for r in records if not r.excluded]
    exclusions = len(records) - len(kept)
    if not kept:
        raise ValueError("every replication was excluded")
    estimates = np.array([r.estimate for r in kept])
    sq_err = (estimates - e_true) ** 2
    k = len(kept)
    nmse = float(n * sq_err.mean())
    half = 1.96 * n * sq_err.std(ddof=1) / np.sqrt(k) if k > 1 else 0.0
    mean_est = float(estimates.mean())
    sd_est = float(estimates.std(ddof=1)) if k > 1 else 0.0

    saving = None
    if 0.0 < mean_est < 1.0 and sd_est > 0.0:
        saving = computational_saving(mean_est, sd_est, n)
    ess_g_values = np.array([r.ess_g for r in kept])
    q10, q50, q90 = np.quantile(ess_g_values, [0.1, 0.5, 0.9])
    return ExperimentResult(
        scenario=records[0].scenario, sampler=records[0].sampler, n=n,
        d=records[0].d, replications=len(records), nmse=nmse,
        nmse_ci_lo=nmse - half, nmse_ci_hi=nmse + half,
        mean_estimate=mean_est, sd_estimate=sd_est, saving=saving,
        exclusions=exclusions, flagged=sum(1 for r in records if r.flags),
        e_true=float(e_true), v_min=float(v_min),
        ess_g_q10=float(q10), ess_g_q50=float(q50), ess_g_q90=float(q90),
        mean_m=float(np.mean([r.m for r in records])))


def computational_saving(e_hat: float, stderr: float, n: int) -> float:
    """Fraction of the crude Monte Carlo budget avoided at equal error.

    ``n_cmc = e_hat (1 - e_hat) / stderr^2`` is the crude sample size that
    would match the given standard error; the saving is
    ``(n_cmc - n) / n_cmc`` (possibly negative, never an error).
    """
    if not 0.0 < e_hat < 1.0:
        raise ValueError("e_hat must lie strictly between 0 and 1")
    if stderr <= 0.0:
        raise ValueError("stderr must be positive")
    n_cmc = e_hat * (1.0 - e_hat) / stderr ** 2
    return (n_cmc - n) / n_cmc


def validate_config(config: dict) -> list:
    """Collect every problem with an experiment configuration."""
    problems = []
    scenarios = config.get("scenarios")
    if not isinstance(scenarios, list) or not scenarios:
        problems.append("'scenarios' must be a nonempty list")
        scenarios = []
    samplers = config.get("samplers")
    if not isinstance(samplers, list) or not samplers:
        problems.append("'samplers' must be a nonempty list")
        samplers = []
    for s in samplers:
        if s not in SAMPLER_KINDS:
            problems.append(f"unknown sampler kind {s!r}")
    ns = config.get("n")
    if isinstance(ns, int):
        ns = [ns]
    if not isinstance(ns, list) or not ns or any((not isinstance(v, int)) or v < 2 for v in ns):
        problems.append("'n' must be an integer >= 2 or a list of them")
    reps = config.get("replications")
    if not isinstance(reps, int) or reps < 1:
        problems.append("'replications' must be a positive integer")
    alloc = config.get("allocation", {})
    if not isinstance(alloc, dict):
        problems.append("'allocation' must be a mapping")
    return problems


def _cells(config: dict):
    scenarios = []
    for cfg in config["scenarios"]:
        scenario = scenario_from_config(cfg) if "kind" in cfg else None
        if scenario is None:
            from .scenarios import get_scenario
            scenario = get_scenario(cfg["name"])
        scenarios.append(scenario)
    ns = config["n"] if isinstance(config["n"], list) else [config["n"]]
    index = 0
    for scenario in scenarios:
        for sampler in config["samplers"]:
            for n in ns:
                yield index, scenario.with_sampler(sampler), n
                index += 1


def run_experiment(config: dict, out_dir, master_seed: int = 0,
                   workers: int = 1) -> list:
    """Sweep the configured grid, writing per-replication and summary files.

    Outputs in ``out_dir``: ``records.csv`` (one row per replication),
    ``summary.json`` (one entry per cell) and ``nmse_vs_n.csv`` (plot-ready
    scaled-error table).  Returns the list of :class:`ExperimentResult`.
    """
    problems = validate_config(config)
    if problems:
        raise ValueError("invalid experiment config: " + "; ".join(problems))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    alloc_cfg = config.get("allocation", {})
    normalizer = NormalizerSpec(**config["normalizer"]) if "normalizer" in config else None
    mix_weight = float(config.get("mix_weight", 0.0))
    reps = config["replications"]

    all_records = []
    results = []
    for index, scenario, n in _cells(config):
        policy = AllocationPolicy.for_sampler(
            scenario.sampler,
            parametric_c=float(alloc_cfg.get("parametric_c", 2.0)),
            nonparametric_c=float(alloc_cfg.get("nonparametric_c", 6.0)))
        if alloc_cfg.get("fixed_m"):
            policy = AllocationPolicy("fixed", fixed_m=int(alloc_cfg["fixed_m"]))
        records = run_cell(scenario, n, reps, master_seed, index, policy,
                           workers, normalizer, mix_weight)
        all_records.extend(records)
        try:
            results.append(aggregate(records, scenario.e_true, scenario.v_min))
        except ValueError:
            # Cells without a usable truth (all excluded or unknown estimand)
            # still contribute raw records.
            pass

    with open(out_dir / "records.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORD_COLUMNS)
        writer.writerows(record.to_row() for record in all_records)
    with open(out_dir / "summary.json", "w") as fh:
        json.dump([res.to_dict() for res in results], fh, indent=2)
        fh.write("\n")
    with open(out_dir / "nmse_vs_n.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "sampler", "n", "nmse", "nmse_ci_lo",
                         "nmse_ci_hi", "v_min"])
        for res in results:
            writer.writerow([res.scenario, res.sampler, res.n, repr(res.nmse),
                             repr(res.nmse_ci_lo), repr(res.nmse_ci_hi),
                             repr(res.v_min)])
    return results
