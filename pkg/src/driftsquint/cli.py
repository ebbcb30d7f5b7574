"""Command-line interface: run, bounds, compare, verify, scenarios."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .envsim import builtin_scenarios
from .harness import (
    ExperimentConfig,
    compare,
    evaluate_bounds,
    intervals_for,
    read_config,
    run,
    run_many,
    scenario_config,
    write_bound_csv,
    write_compare_csv,
    write_config,
    write_run_csv,
)
from .verify import run_all


def _add_common(p):
    p.add_argument("--config", help="JSON experiment config (overrides the scenario flags)")
    p.add_argument("--algo", default="squint-ce-uniform", help="algorithm name")
    p.add_argument("--scenario", default="stationary", help="builtin scenario name")
    p.add_argument("--T", type=int, default=256, help="horizon")
    p.add_argument("--K", type=int, default=4, help="number of experts")
    p.add_argument("--seed", type=int, default=0, help="environment seed")
    p.add_argument("--intervals", default="dyadic",
                   help="interval policy: exhaustive | dyadic | sampled:<n>")
    p.add_argument("--out", default="out", help="output directory")


def _config_from(args) -> ExperimentConfig:
    if args.config:
        return read_config(args.config)
    return scenario_config(args.algo, args.scenario, args.T, args.K, args.seed,
                           intervals=args.intervals)


def _cmd_run(args) -> int:
    config = _config_from(args)
    record = run(config)
    report = evaluate_bounds(record)
    os.makedirs(args.out, exist_ok=True)
    write_config(config, os.path.join(args.out, "config.json"))
    write_run_csv(record, os.path.join(args.out, "run.csv"))
    write_bound_csv(report, os.path.join(args.out, "bounds.csv"))
    bad = report.violations()
    print(f"{config.algorithm}: T={record.horizon} K={record.n_experts} "
          f"rows={len(report.rows)} min_slack={report.min_slack:.6g} "
          f"violations={len(bad)}")
    print(f"wrote {args.out}/run.csv, {args.out}/bounds.csv")
    return 1 if bad else 0


def _cmd_bounds(args) -> int:
    config = _config_from(args)
    record = run(config)
    report = evaluate_bounds(record)
    os.makedirs(args.out, exist_ok=True)
    write_bound_csv(report, os.path.join(args.out, "bounds.csv"))
    by_name: dict[str, float] = {}
    for row in report.rows:
        by_name[row.bound_name] = min(by_name.get(row.bound_name, float("inf")), row.slack)
    for name, slack in sorted(by_name.items()):
        print(f"{name}: min slack {slack:.6g}")
    bad = report.violations()
    print(f"{len(report.rows)} rows, {len(bad)} violations")
    return 1 if bad else 0


def _cmd_compare(args) -> int:
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    configs = []
    for algo in algos:
        for s in range(args.seeds):
            configs.append(scenario_config(algo, args.scenario, args.T, args.K,
                                           args.seed + s, intervals=args.intervals))
    records = run_many(configs)
    intervals = intervals_for(args.intervals, args.T, seed=args.seed)
    rows = compare(records, intervals)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "compare.csv")
    write_compare_csv(rows, path)
    full = [r for r in rows if (r["i1"], r["i2"]) == (1, args.T)]
    for row in full:
        print(f"[1,{args.T}] {row['algorithm']}: mean regret vs best expert "
              f"{row['regret_mean']:.3f} over {row['seeds']} seeds")
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def _cmd_verify(args) -> int:
    results = run_all(quick=args.quick)
    failures = 0
    for res in results:
        print(res.line())
        failures += 0 if res.ok else 1
    print(f"done: {len(results)} checks, {failures} failures")
    return 1 if failures else 0


def _cmd_scenarios(args) -> int:
    presets = builtin_scenarios(args.T, args.K, args.seed)
    for name, spec in presets.items():
        print(f"{name}: {json.dumps(spec.to_json())}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="driftsquint",
        description="Expert-advice learners for changing environments, with "
                    "per-run verification of their regret bounds.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment, write run + bound CSVs")
    _add_common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_bounds = sub.add_parser("bounds", help="evaluate every applicable bound for a config")
    _add_common(p_bounds)
    p_bounds.set_defaults(fn=_cmd_bounds)

    p_cmp = sub.add_parser("compare", help="measured regret table across algorithms")
    _add_common(p_cmp)
    p_cmp.add_argument("--algos", default="hedge,squint,squint-ce-uniform",
                       help="comma-separated algorithm list")
    p_cmp.add_argument("--seeds", type=int, default=5, help="seeds per algorithm")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_verify = sub.add_parser("verify", help="run the invariant and bound suites")
    p_verify.add_argument("--quick", action="store_true", help="reduced scale")
    p_verify.set_defaults(fn=_cmd_verify)

    p_scen = sub.add_parser("scenarios", help="list builtin environment presets")
    p_scen.add_argument("--T", type=int, default=256)
    p_scen.add_argument("--K", type=int, default=4)
    p_scen.add_argument("--seed", type=int, default=0)
    p_scen.set_defaults(fn=_cmd_scenarios)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
