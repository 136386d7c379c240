"""Command-line entry point.

Subcommands: solve (write value tables), simulate (run experiments to
runs.csv + summary.csv), sweep (tuning table), verify (ground-truth
self-checks). Every run writes a manifest.csv recording the inputs that
reproduce it.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from datetime import datetime, timezone

from . import __version__
from .config import ConfigError, has_oracle_section, load_experiment, load_oracle_instance
from .simulate import (
    RUNS_COLUMNS,
    TRACE_COLUMNS,
    run_experiment,
    solve_required,
    sweep_tuning,
    write_summary,
)
from .solver import MdpSolution, NotConverged
from .verify import run_verify_suite

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_SOLVE = 3
EXIT_IO = 4

_EPILOG = """exit codes:
  0  success
  1  failed check or unexpected error
  2  configuration error
  3  solver did not converge
  4  input/output error
"""


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="admdp",
        description="Repeated ad auctions with user response: solver, simulator, and checks.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--version", action="version", version=f"admdp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("solve", "solve the value tables the configured mechanisms need"),
        ("simulate", "run the configured experiment and write runs.csv + summary.csv"),
        ("sweep", "cross the tuning grids and write sweep.csv"),
        ("verify", "run the exhaustive ground-truth self-checks"),
    ):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("--config", required=(name != "verify"), help="experiment config file")
        q.add_argument("--out", required=True, help="output directory")
        q.add_argument("--seed", type=int, default=None, help="override the config master seed")
        q.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="worker processes (results are identical for any value)")
        q.add_argument("--trace", action="store_true", help="write per-round mechanism diagnostics")
    return p


def _manifest(out_dir, args, seed, started, finished) -> None:
    path = os.path.join(out_dir, "manifest.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["key", "value"])
        w.writerow(["command", args.command])
        w.writerow(["config", getattr(args, "config", "") or ""])
        w.writerow(["seed", seed])
        w.writerow(["out", args.out])
        w.writerow(["version", __version__])
        w.writerow(["started", started])
        w.writerow(["finished", finished])


def _solution_path(out_dir, gamma: float) -> str:
    return os.path.join(out_dir, f"solution_gamma{gamma:g}.csv")


def _load_or_solve(cfg, out_dir) -> dict[float, MdpSolution]:
    from .solver import solve_value_iteration

    solutions = {}
    for g in cfg.solver_gammas():
        path = _solution_path(out_dir, g)
        if os.path.exists(path):
            solutions[g] = MdpSolution.from_csv(path, profile=cfg.profile)
        else:
            sol = solve_value_iteration(
                cfg.profile, cfg.kernel, cfg.grid, gamma=g,
                tol=cfg.solver_tol, max_iters=cfg.solver_max_iters,
                seed=cfg.seed, n_samples=cfg.solver_samples,
            )
            sol.to_csv(path)
            solutions[g] = sol
    return solutions


def _cmd_solve(args) -> int:
    cfg = load_experiment(args.config, seed_override=args.seed)
    args.resolved_seed = cfg.seed
    for g, sol in solve_required(cfg).items():
        path = _solution_path(args.out, g)
        sol.to_csv(path)
        print(f"gamma={g:g}: residual {sol.residual:.3e} after {sol.iterations} sweeps -> {path}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = load_experiment(args.config, seed_override=args.seed)
    args.resolved_seed = cfg.seed
    solutions = _load_or_solve(cfg, args.out)
    runs_path = os.path.join(args.out, "runs.csv")
    trace_path = os.path.join(args.out, "trace.csv")
    with open(runs_path, "w", newline="") as runs_fh:
        runs_writer = csv.writer(runs_fh)
        runs_writer.writerow(RUNS_COLUMNS)
        trace_fh = open(trace_path, "w", newline="") if args.trace else None
        try:
            trace_writer = None
            if trace_fh is not None:
                trace_writer = csv.writer(trace_fh)
                trace_writer.writerow(TRACE_COLUMNS)
            report = run_experiment(
                cfg, solutions, jobs=args.jobs,
                runs_writer=runs_writer, trace_writer=trace_writer,
            )
        finally:
            if trace_fh is not None:
                trace_fh.close()
    write_summary(os.path.join(args.out, "summary.csv"), report)
    for e in report.best_entries():
        print(f"{e.kind}[{e.tuning}]: final mean cumulative revenue {e.final_cum_revenue:.4f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_experiment(args.config, seed_override=args.seed)
    args.resolved_seed = cfg.seed
    solutions = _load_or_solve(cfg, args.out)
    rows = sweep_tuning(cfg, solutions, jobs=args.jobs)
    path = os.path.join(args.out, "sweep.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mechanism", "tuning", "final_mean_revenue"])
        for kind, tuning, final in rows:
            w.writerow([kind, tuning, repr(final)])
    best = max(rows, key=lambda r: r[2])
    print(f"best point: {best[0]}[{best[1]}] at {best[2]:.4f}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    instance = None
    if args.config:
        if has_oracle_section(args.config):
            instance = load_oracle_instance(args.config)
    seed = args.seed if args.seed is not None else 0
    args.resolved_seed = seed
    results = run_verify_suite(seed=seed, instance=instance)
    path = os.path.join(args.out, "verify_report.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "instances", "passed", "worst"])
        for r in results:
            w.writerow([r.name, r.instances, int(r.passed), repr(r.worst)])
    ok = True
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.name} ({r.instances} instances, worst {r.worst:.6g})")
        ok = ok and r.passed
    return EXIT_OK if ok else EXIT_ERROR


_COMMANDS = {
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    try:
        os.makedirs(args.out, exist_ok=True)
        code = _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotConverged as exc:
        print(f"solve error: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pragma: no cover - last resort diagnostics
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    finished = datetime.now(timezone.utc).isoformat()
    _manifest(args.out, args, getattr(args, "resolved_seed", 0), started, finished)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
