"""Run every acceptance config and print a one-line verdict per criterion.

usage: python3 scripts/run_acceptance.py [--out DIR]
"""
import argparse
import sys
from pathlib import Path

from bhlab.runner import run_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=ROOT / "reports")
    args = ap.parse_args()
    failures = 0
    for path in sorted((ROOT / "configs" / "acceptance").glob("*.toml")):
        report, target, runtime = run_config(path, args.out)
        number = int(path.stem.split("_")[0])
        verdict = "PASS" if report["passed"] else "FAIL"
        failures += not report["passed"]
        print(f"{verdict} criterion {number:2d}  {path.stem:16s} {runtime:7.1f} s  -> {target}")
        for c in report["criteria"]:
            if not c["passed"]:
                print(f"      failed: {c['name']} = {c['value']}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
