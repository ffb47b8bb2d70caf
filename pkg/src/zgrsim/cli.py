"""Command-line entry point: ``zgrsim run|analyze|pipeline|sweep``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import load_config, load_pipeline_file
from .errors import ZGRError
from .pipeline import analytic_latency, client_memory, hiding_condition, latency_reduction, simulate_pipeline

log = logging.getLogger("zgrsim")


def _parse_stats(text: str):
    from .theory import EstimatorStats

    fields = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected key=value, got {item!r}")
        fields[key.strip()] = float(value)
    if "d" in fields:
        fields["d"] = int(fields["d"])
    try:
        return EstimatorStats(**fields)
    except TypeError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_run(args) -> int:
    from dataclasses import replace

    from .harness import run

    cfg = load_config(args.config)
    if args.trace:
        cfg = replace(cfg, trace=True)
    result = run(cfg, args.out)
    print(json.dumps(result.summary, indent=2, sort_keys=True))
    return 0


def cmd_analyze(args) -> int:
    from .errors import DegenerateStatsError, UnboundedSpeedup
    from .theory import accuracy_ratio, mse_lambda, optimal_lambda, speedup_ratio

    stats = args.stats
    print(f"d={stats.d} sigma2={stats.sigma2} bias2={stats.bias2} tau2={stats.tau2}")
    print(f"{'lambda':>8}  {'mse':>14}")
    for k in range(args.points + 1):
        lam = k / args.points
        print(f"{lam:8.3f}  {mse_lambda(stats, lam):14.6g}")
    try:
        lam_star = optimal_lambda(stats)
        print(f"lambda*          {lam_star:.6g}")
        print(f"mse(lambda*)     {mse_lambda(stats, lam_star):.6g}")
    except DegenerateStatsError as exc:
        print(f"lambda*          undefined ({exc})")
    try:
        print(f"speedup          {speedup_ratio(stats):.6g}")
    except UnboundedSpeedup:
        print("speedup          unbounded")
    try:
        print(f"accuracy ratio   {accuracy_ratio(stats):.6g}")
    except DegenerateStatsError as exc:
        print(f"accuracy ratio   undefined ({exc})")
    return 0


def cmd_pipeline(args) -> int:
    spec, memory, transfer = load_pipeline_file(args.spec)
    seq = simulate_pipeline(spec, pipelined=False, transfer=transfer).makespan
    pipe = simulate_pipeline(spec, pipelined=True, transfer=transfer).makespan
    print(f"layers L={spec.L} transfer={transfer} hiding_condition={hiding_condition(spec)}")
    print(f"{'schedule':<12}{'analytic_s':>14}{'simulated_s':>14}")
    print(f"{'sequential':<12}{analytic_latency(spec, 'sequential'):>14.6g}{seq:>14.6g}")
    print(f"{'pipelined':<12}{analytic_latency(spec, 'pipelined'):>14.6g}{pipe:>14.6g}")
    print(f"analytic reduction {latency_reduction(spec):.6g} s, simulated {seq - pipe:.6g} s")
    if memory is not None:
        from dataclasses import replace

        print(f"{'memory mode':<12}{'footprint':>14}")
        for mode in ("baseline", "spc", "spc_dtc"):
            if mode == "spc_dtc" and (memory.omega is None or memory.theta is None):
                continue
            print(f"{mode:<12}{client_memory(replace(memory, mode=mode)):>14.6g}")
    return 0


def cmd_sweep(args) -> int:
    from .harness import load_grid, sweep, sweep_table

    rows = sweep(load_config(args.config), load_grid(args.grid), args.out)
    sys.stdout.write(sweep_table(rows))
    return 0 if all(r["status"] == "ok" for r in rows) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zgrsim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trace", action="store_true", help="also write trace.ndjson")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="closed-form error and speedup table")
    p.add_argument("--stats", required=True, type=_parse_stats, help="d=...,sigma2=...,bias2=...,tau2=...")
    p.add_argument("--points", type=int, default=10, help="lambda grid intervals")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pipeline", help="pipelined vs sequential latency and memory")
    p.add_argument("--spec", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("sweep", help="run a grid of experiments")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ZGRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
