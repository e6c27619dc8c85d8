"""Command line: bhlab run | kappa | plots."""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import BhlabError, ConfigError, DomainRangeError, HypothesisViolation

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def exit_code(exc):
    if isinstance(exc, (ConfigError, DomainRangeError)):
        return EXIT_CONFIG
    if isinstance(exc, HypothesisViolation):
        return EXIT_FAIL
    return EXIT_NUMERIC


def _describe(exc):
    diag = getattr(exc, "diagnostics", None)
    return f"{type(exc).__name__}: {exc}" + (f" {diag}" if diag else "")


def _run_one(path, out):
    from .runner import run_config
    try:
        report, target, runtime = run_config(path, out)
    except BhlabError as exc:
        return path, exit_code(exc), [f"{path}: {_describe(exc)}"]
    lines = [f"{path}: {'PASS' if report['passed'] else 'FAIL'} ({runtime:.1f} s) -> {target}"]
    for c in report["criteria"]:
        lines.append(f"  [{'pass' if c['passed'] else 'FAIL'}] {c['name']}: {c['value']}")
    return path, EXIT_PASS if report["passed"] else EXIT_FAIL, lines


def _workers(jobs):
    cap = os.environ.get("BHLAB_THREADS")
    n = max(1, jobs)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ConfigError("BHLAB_THREADS must be an integer") from None
    return n


def cmd_run(args):
    try:
        workers = _workers(args.jobs)
    except ConfigError as exc:
        print(_describe(exc), file=sys.stderr)
        return EXIT_CONFIG
    paths = [str(p) for p in args.configs]
    if workers == 1 or len(paths) == 1:
        results = [_run_one(p, args.out) for p in paths]
    else:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_one, paths, [args.out] * len(paths)))
    worst = EXIT_PASS
    for _, code, lines in results:
        print("\n".join(lines), file=sys.stdout if code == EXIT_PASS else sys.stderr)
        worst = max(worst, code)
    return worst


def cmd_kappa(args):
    from .experiments import kappa_outcome
    from .runner import write_outputs
    if args.steps < 2 or args.eta_min >= args.eta_max:
        print("ConfigError: need eta-min < eta-max and at least two steps", file=sys.stderr)
        return EXIT_CONFIG
    etas = [args.eta_min + (args.eta_max - args.eta_min) * i / (args.steps - 1) for i in range(args.steps)]
    try:
        out = kappa_outcome(etas, [args.mesh_h, args.mesh_h / 2], eps=0.0)
    except BhlabError as exc:
        print(_describe(exc), file=sys.stderr)
        return exit_code(exc)
    for row in out.measured["curve"]:
        print(f"eta = {row['eta']:+.4f}   mu = {row['mu']:.6f}")
    mu0 = out.measured["mu0"]
    print(f"mu(0) Richardson = {mu0['richardson']:.6f}")
    if args.out:
        report = {"name": "kappa", "experiment-kind": "kappa", "config": {"eta": etas, "mesh-h": args.mesh_h},
                  "measured": out.measured, "criteria": out.criteria,
                  "passed": all(c["passed"] for c in out.criteria),
                  "series": [{"name": s["name"], "kind": s["kind"], "columns": s["columns"],
                              "file": f"{s['name']}.csv", "points": len(s["rows"])} for s in out.series]}
        target = write_outputs(report, out.series, 0.0, Path(args.out))
        print(f"report -> {target}")
    return EXIT_PASS if all(c["passed"] for c in out.criteria) else EXIT_FAIL


def cmd_plots(args):
    from .runner import emit_plots
    path = Path(args.report)
    if not path.exists():
        print(f"ConfigError: {path}: no such report", file=sys.stderr)
        return EXIT_CONFIG
    scripts, notes = emit_plots(path, args.style)
    for s in scripts:
        print(s)
    for n in notes:
        print(f"note: {n}")
    return EXIT_PASS


def build_parser():
    p = argparse.ArgumentParser(prog="bhlab", description="Config-driven boundary Harnack experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run experiment configs and write reports")
    r.add_argument("configs", nargs="+", type=Path)
    r.add_argument("--jobs", type=int, default=1, help="run independent configs in parallel")
    r.add_argument("--out", type=Path, default=None, help="output root (default: next to each config)")
    r.set_defaults(func=cmd_run)
    k = sub.add_parser("kappa", help="homogeneity mu(eta) of the slit-cone eigenproblem")
    k.add_argument("--eta-min", type=float, default=-0.25)
    k.add_argument("--eta-max", type=float, default=0.25)
    k.add_argument("--steps", type=int, default=5)
    k.add_argument("--mesh-h", type=float, default=1 / 32)
    k.add_argument("--out", type=Path, default=None)
    k.set_defaults(func=cmd_kappa)
    q = sub.add_parser("plots", help="emit standalone plot scripts for a report")
    q.add_argument("report", type=Path)
    q.add_argument("--style", default="default")
    q.set_defaults(func=cmd_plots)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
