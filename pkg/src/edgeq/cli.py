"""Command-line front end.

Subcommands:
  run <spec.json>        execute a sweep spec, write CSVs + metadata
  account <flags>        print the privacy/utility report for a run setup
  plot-data <summary.csv>  emit tidy aggregated rows for plotting

Exit codes: 0 success, 1 usage error, 2 runtime failure.  The environment
variable EDGEQ_SEED, when set, replaces the spec's seed list with that
single seed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

from . import experiment
from .privacy import (AccountantInputs, BudgetOutOfRangeError, build_report,
                      min_sigma)

PLOT_COLUMNS = ["figure", "x", "series", "mean", "min", "max", "config_hash"]


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetOutOfRangeError as exc:
        print(f"error: {exc} (the budget must satisfy 0 < epsilon < 1)",
              file=sys.stderr)
        return 1
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:   # training blew up, disk full, ...
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeq",
        description="Edge offloading experiments with a privacy-noised "
                    "deep Q-learner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a sweep spec")
    p_run.add_argument("spec", help="path to a JSON experiment spec "
                                    "(an empty object runs the defaults)")
    p_run.add_argument("--output-dir", default=None,
                       help="override the spec's output directory")
    p_run.add_argument("--workers", type=int, default=1,
                       help="process pool size for cells (default 1)")
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_acc = sub.add_parser("account", help="privacy/utility accountant")
    p_acc.add_argument("--epsilon", type=float, required=True)
    p_acc.add_argument("--delta", type=float, required=True)
    p_acc.add_argument("--alpha", type=float, default=0.002)
    p_acc.add_argument("--z", type=float, required=True,
                       help="balance factor (no default: pick explicitly)")
    p_acc.add_argument("--batch", type=int, default=64)
    p_acc.add_argument("--lipschitz", type=float, default=1.0)
    p_acc.add_argument("--sensitivity", type=float, default=1.0)
    p_acc.add_argument("--steps", type=int, default=28000,
                       help="total post-warmup training steps")
    p_acc.add_argument("--sigma", type=float, default=0.1,
                       help="noise level of the run being audited")
    p_acc.add_argument("--state-count", type=int, default=1000)
    p_acc.add_argument("--gamma", type=float, default=0.98)
    p_acc.add_argument("--json", action="store_true", dest="as_json")
    p_acc.set_defaults(func=_cmd_account)

    p_plot = sub.add_parser("plot-data",
                            help="aggregate run output into plotting rows")
    p_plot.add_argument("summary", help="path to a summary.csv; the sibling "
                                        "episodes.csv feeds the learning "
                                        "curves when present")
    p_plot.add_argument("--episodes", default=None,
                        help="explicit episodes.csv path")
    p_plot.add_argument("--out", default=None,
                        help="output CSV path (default: stdout)")
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def _cmd_run(args) -> int:
    spec = experiment.load_spec(args.spec)
    env_seed = os.environ.get("EDGEQ_SEED")
    if env_seed is not None:
        spec = dataclasses.replace(spec, seeds=(int(env_seed),))
    out_dir = args.output_dir or spec.output_dir

    progress = None
    if not args.quiet:
        def progress(cell):
            print(f"done: {cell.algorithm} sigma={cell.sigma} "
                  f"rate={cell.arrival_rate} seed={cell.seed}")
    results = experiment.run_sweep(spec, workers=max(1, args.workers),
                                   progress=progress)
    for logs, _ in results.values():
        if any(not _finite(l) for l in logs):
            print("runtime failure: training diverged (non-finite episode "
                  "log)", file=sys.stderr)
            return 2
    meta = experiment.write_outputs(spec, results, out_dir)
    if not args.quiet:
        print(f"wrote {out_dir}/episodes.csv, summary.csv, metadata.json "
              f"(config {meta['config_hash']})")
    return 0


def _finite(log) -> bool:
    import math
    return all(math.isfinite(v) for v in
               (log.return_disc, log.return_undisc, log.mean_loss))


def _cmd_account(args) -> int:
    inputs = AccountantInputs(
        epsilon=args.epsilon, delta=args.delta, alpha=args.alpha, z=args.z,
        batch=args.batch, lipschitz=args.lipschitz,
        sensitivity=args.sensitivity, episodes_trained=args.steps, horizon=1,
        sigma=args.sigma, state_count=args.state_count, gamma=args.gamma)
    min_sigma(inputs)  # raises BudgetOutOfRangeError before any output
    report = build_report(inputs)
    if args.as_json:
        print(json.dumps(report.as_dict()))
        return 0
    print("privacy/utility report")
    print(f"  sigma_min        : {report.sigma_min:.6g}   "
          f"(smallest compliant noise level)")
    print(f"  delta_effective  : {report.delta_effective:.6g}   "
          f"(requested delta plus kernel tail)")
    print(f"  z_condition_met  : {report.z_condition_met}   "
          f"(2z > 8.68 sqrt(psi) sigma)")
    print(f"  rkhs_bound       : {report.rkhs_bound:.6g}   "
          f"(squared-norm bound J)")
    print(f"  utility_bound    : {report.utility_bound:.6g}   "
          f"(expected L1 learning error)")
    return 0


def _cmd_plot(args) -> int:
    rows = experiment.plot_data_rows(args.summary, args.episodes)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            _write_plot_rows(fh, rows)
    else:
        _write_plot_rows(sys.stdout, rows)
    return 0


def _write_plot_rows(fh, rows) -> None:
    writer = csv.writer(fh)
    writer.writerow(PLOT_COLUMNS)
    writer.writerows(rows)


if __name__ == "__main__":
    sys.exit(main())
