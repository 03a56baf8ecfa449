"""Command-line interface: run one scenario, sweep a method/seed grid, or
aggregate previously written traces into a report.

Exit codes: 0 success, 2 infeasible scenario, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import glob
import os
import sys

from .alloc import InfeasibleAllocationError
from .config import METHODS, ConfigError, load_config
from .harness import emit_outputs, read_trace_csv, run

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_BAD_CONFIG = 3


def _parse_seeds(spec: str):
    if ":" in spec:
        lo, hi = spec.split(":", 1)
        return list(range(int(lo), int(hi)))
    return [int(s) for s in spec.split(",")]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hfelsim",
        description="Hierarchical federated edge learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a single scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--method", choices=METHODS, default=None,
                       help="override the config method")
    p_run.add_argument("--out", required=True, help="output directory")

    p_sweep = sub.add_parser("sweep", help="run a method x seed grid")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--methods", default=",".join(METHODS),
                         help="comma-separated method list")
    p_sweep.add_argument("--seeds", default="0:3",
                         help="'lo:hi' range or comma-separated list")
    p_sweep.add_argument("--out", required=True)

    p_report = sub.add_parser(
        "report", help="aggregate trace CSVs into a summary and plots")
    p_report.add_argument("--out", required=True,
                          help="directory containing trace_*.csv files")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.method is not None:
        cfg = cfg.replace(method=args.method)
    result = run(cfg)
    emit_outputs([(cfg, result.traces)], args.out)
    last = result.traces[-1]
    print(f"{cfg.method} seed={cfg.seed}: time={last.cum_time:.3f}s "
          f"energy={last.cum_energy.sum():.4f}J "
          f"accuracy={last.test_accuracy:.4f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    runs = []
    for method in args.methods.split(","):
        if method not in METHODS:
            raise ConfigError(f"method {method!r} not one of {METHODS}")
        for seed in _parse_seeds(args.seeds):
            c = cfg.replace(method=method, seed=seed)
            result = run(c)
            runs.append((c, result.traces))
            print(f"done {method} seed={seed}: "
                  f"time={result.traces[-1].cum_time:.3f}s")
    emit_outputs(runs, args.out)
    return EXIT_OK


def _cmd_report(args) -> int:
    paths = sorted(glob.glob(os.path.join(args.out, "trace_*.csv")))
    if not paths:
        print("no trace CSVs found", file=sys.stderr)
        return EXIT_BAD_CONFIG
    rows = []
    for path in paths:
        traces = read_trace_csv(path)
        stem = os.path.basename(path)[len("trace_"):-len(".csv")]
        method, _, seed = stem.rpartition("_seed")
        last = traces[-1]
        rows.append({
            "method": method,
            "seed": seed,
            "total_time": last.cum_time,
            "total_energy": float(last.cum_energy.sum()),
            "best_accuracy": max(tr.test_accuracy for tr in traces),
            "final_accuracy": last.test_accuracy,
        })
    out_path = os.path.join(args.out, "summary.csv")
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {out_path} ({len(rows)} runs)")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_report(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except InfeasibleAllocationError as exc:
        print(f"infeasible scenario: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
