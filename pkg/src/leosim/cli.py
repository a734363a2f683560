"""Command-line front end.

Subcommands: ``run`` (single episode), ``compare`` (both policies on the
same seed), ``montecarlo`` (replicated aggregate statistics),
``geometry`` (visibility timeline dump), ``validate-tle`` (element-set
checks).  Outputs are data files (CSV/JSON) meant for external plotting.

Exit codes: 0 success, 2 usage/config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import allocator, orbital, policies, simulator
from .config import ConfigError, ScenarioConfig, apply_overrides

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leosim",
        description="LEO downlink association/power simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, seeded: bool = True):
        p.add_argument("--config", help="scenario config JSON (defaults used if omitted)")
        p.add_argument("--out", default="out", help="output directory (created if absent)")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted-path config override")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective config as JSON and exit")
        if seeded:
            p.add_argument("--seed", type=int, help="override the master seed")

    p_run = sub.add_parser("run", help="run one episode and write per-slot outputs")
    add_common(p_run)
    p_run.add_argument("--policy", choices=["optimized", "min-distance"],
                       default="optimized")

    p_cmp = sub.add_parser("compare", help="run both policies on identical seeds")
    add_common(p_cmp)

    p_mc = sub.add_parser("montecarlo", help="replicated runs with aggregate stats")
    add_common(p_mc)
    p_mc.add_argument("--runs", type=int, required=True, help="number of replicates")
    p_mc.add_argument("--jobs", type=int, default=1, help="parallel worker count")

    p_geo = sub.add_parser("geometry", help="dump the visibility timeline CSV")
    add_common(p_geo)

    p_tle = sub.add_parser("validate-tle", help="check a TLE file parses cleanly")
    p_tle.add_argument("tle_file", help="path to a 2-line/3-line element file")

    return parser


def _load_config(args) -> ScenarioConfig:
    if args.config is not None:
        if not os.path.exists(args.config):
            raise OSError(f"config file not found: {args.config}")
        cfg = ScenarioConfig.from_json(args.config)
    else:
        cfg = ScenarioConfig()
    if args.overrides:
        cfg = apply_overrides(cfg, args.overrides)
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, [f"master_seed={args.seed}"])
    return cfg


def _prepare_out(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _warn_non_optimal(metrics: simulator.RunMetrics) -> None:
    bad = [t + 1 for t, ok in enumerate(metrics.per_slot_optimal) if not ok]
    if metrics.policy == "optimized" and bad:
        print(f"warning: solver returned non-optimal solutions at slots {bad}",
              file=sys.stderr)


def _cmd_run(args, cfg: ScenarioConfig) -> int:
    out = _prepare_out(args)
    policy = args.policy.replace("-", "_")
    metrics = simulator.run_episode(cfg, policy=policy)
    simulator.write_episode_csv(os.path.join(out, f"episode_{policy}.csv"), metrics)
    for t, sol in enumerate(metrics.solutions, start=1):
        with open(os.path.join(out, f"solution_{policy}_{t:03d}.json"), "w") as fh:
            fh.write(allocator.solution_to_json(sol))
    policies.write_handover_log(os.path.join(out, f"handover_log_{policy}.csv"),
                                metrics.assoc_history)
    if cfg.solver == "exact":
        _warn_non_optimal(metrics)
    return EXIT_OK


def _cmd_compare(args, cfg: ScenarioConfig) -> int:
    out = _prepare_out(args)
    timeline = simulator.build_timeline(cfg)
    optimized = simulator.run_episode(cfg, policy="optimized", timeline=timeline)
    baseline = simulator.run_episode(cfg, policy="min_distance", timeline=timeline)
    simulator.write_compare_csv(os.path.join(out, "compare.csv"), optimized, baseline)
    summary = {
        "optimized": {
            "total_rate_bps_per_slot": optimized.per_slot_total_rate_bps.tolist(),
            "total_handovers": optimized.ledger.total,
            "efc": optimized.efc,
        },
        "min_distance": {
            "total_rate_bps_per_slot": baseline.per_slot_total_rate_bps.tolist(),
            "total_handovers": baseline.ledger.total,
            "efc": baseline.efc,
        },
    }
    with open(os.path.join(out, "compare_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    if cfg.solver == "exact":
        _warn_non_optimal(optimized)
    return EXIT_OK


def _cmd_montecarlo(args, cfg: ScenarioConfig) -> int:
    if args.runs < 1:
        print("error: --runs must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    out = _prepare_out(args)
    aggregate = simulator.monte_carlo(cfg, args.runs, jobs=max(1, args.jobs))
    proposed = aggregate["optimized"]["mean_user_rate_bps"]
    base = aggregate["min_distance"]["mean_user_rate_bps"]
    result = dict(aggregate)
    result["relative_improvement"] = (proposed - base) / base if base > 0 else None
    result["n_runs"] = args.runs
    with open(os.path.join(out, "montecarlo.json"), "w") as fh:
        json.dump(result, fh, indent=2)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def _cmd_geometry(args, cfg: ScenarioConfig) -> int:
    out = _prepare_out(args)
    timeline = simulator.build_timeline(cfg)
    simulator.write_geometry_csv(os.path.join(out, "geometry.csv"), timeline)
    return EXIT_OK


def _cmd_validate_tle(args) -> int:
    try:
        with open(args.tle_file) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        tles = orbital.parse_tle(text)
    except orbital.TleParseError as exc:
        print(f"invalid TLE: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"OK: {len(tles)} element set(s)")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    if args.command == "validate-tle":
        return _cmd_validate_tle(args)

    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    if args.print_config:
        print(cfg.to_json())
        return EXIT_OK

    try:
        if args.command == "run":
            return _cmd_run(args, cfg)
        if args.command == "compare":
            return _cmd_compare(args, cfg)
        if args.command == "montecarlo":
            return _cmd_montecarlo(args, cfg)
        if args.command == "geometry":
            return _cmd_geometry(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    parser.error(f"unknown command {args.command}")
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
