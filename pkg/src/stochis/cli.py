"""Command-line interface.

Subcommands
-----------
``stochis experiment --config cfg.json --out dir --seed 7 [--workers N]``
    Sweep the configured (scenario, sampler, n) grid and write records.csv,
    summary.json and nmse_vs_n.csv into the output directory.

``stochis estimate --scenario exp-exp-d1 --sampler param_correct --n 1000 --seed 7``
    Run a single replication and print its report as JSON.

``stochis oracle --scenario exp-exp-d1``
    Print the scenario's true estimand, minimal scaled variance and threshold.
"""

import argparse
import json
import sys

from .alloc import AllocationPolicy
from .runner import run_experiment, run_replication
from .scenarios import SAMPLER_KINDS, get_scenario

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochis",
        description="Two-stage importance sampling for stochastic simulation models")
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("experiment", help="run a configured experiment grid")
    exp.add_argument("--config", required=True, help="path to the JSON experiment config")
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--seed", type=int, default=0, help="master seed")
    exp.add_argument("--workers", type=int, default=1, help="worker processes")

    est = sub.add_parser("estimate", help="run one replication and print the report")
    est.add_argument("--scenario", required=True, help="scenario name, e.g. exp-exp-d1")
    est.add_argument("--sampler", required=True, choices=SAMPLER_KINDS)
    est.add_argument("--n", type=int, required=True, help="total simulation budget")
    est.add_argument("--seed", type=int, required=True, help="replication seed")
    est.add_argument("--allocation-c", type=float, default=None,
                     help="override the allocation constant")

    orc = sub.add_parser("oracle", help="print a scenario's exact constants")
    orc.add_argument("--scenario", required=True, help="scenario name")
    return parser


def _cmd_experiment(args) -> int:
    with open(args.config) as fh:
        config = json.load(fh)
    results = run_experiment(config, args.out, master_seed=args.seed,
                             workers=args.workers)
    print(f"wrote {len(results)} cell summaries to {args.out}")
    for res in results:
        print(f"  {res.scenario} {res.sampler} n={res.n}: "
              f"nMSE={res.nmse:.5f} [{res.nmse_ci_lo:.5f}, {res.nmse_ci_hi:.5f}]")
    return 0


def _cmd_estimate(args) -> int:
    scenario = get_scenario(args.scenario).with_sampler(args.sampler)
    policy = AllocationPolicy.for_sampler(args.sampler)
    if args.allocation_c is not None:
        policy = AllocationPolicy(policy.kind, args.allocation_c)
    record = run_replication(scenario, args.n, policy, seed=args.seed)
    payload = record.report.to_dict()
    payload.update({"scenario": record.scenario, "sampler": record.sampler,
                    "seed": record.seed, "excluded": record.excluded})
    json.dump(payload, sys.stdout, indent=2)
    print()
    return 0


def _cmd_oracle(args) -> int:
    scenario = get_scenario(args.scenario)
    json.dump({"scenario": scenario.name, "e_true": scenario.e_true,
               "v_min": scenario.v_min, "xi": scenario.xi}, sys.stdout, indent=2)
    print()
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"experiment": _cmd_experiment, "estimate": _cmd_estimate,
                "oracle": _cmd_oracle}
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
