"""Run configs, serialize reports deterministically, emit plot scripts."""
from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

import numpy as np

from .config import config_echo, load_config
from .errors import ConfigError
from .experiments import RUNNERS, Outcome

REPORT = "report.json"
TIMING = "timing.json"


def _clean(v):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings, tuples to lists."""
    if isinstance(v, dict):
        return {str(k): _clean(v[k]) for k in v}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def serialize(report):
    return json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"


def run_determinism(cfg):
    """Execute each listed config twice and compare the serialized reports byte for byte."""
    out = Outcome()
    base = cfg.path.parent if cfg.path else Path(".")
    for rel in cfg.param("configs"):
        path = base / rel
        first = serialize(execute(load_config(path))[0])
        second = serialize(execute(load_config(path))[0])
        same = first == second
        out.measured[str(rel)] = {"bytes": len(first), "identical": same}
        out.check(f"byte-identical report for {rel}", same, len(first), None)
    return out


def execute(cfg):
    """Run one config; returns (report, series, runtime)."""
    start = time.perf_counter()
    if cfg.kind == "determinism":
        outcome = run_determinism(cfg)
    else:
        runner = RUNNERS.get(cfg.kind)
        if runner is None:
            raise ConfigError(f"experiment-kind: no runner for {cfg.kind!r}")
        outcome = runner(cfg)
    runtime = time.perf_counter() - start
    series_meta = []
    for s in outcome.series:
        meta = {k: v for k, v in s.items() if k != "rows"}
        meta["file"] = f"{s['name']}.csv"
        meta["points"] = len(s["rows"])
        series_meta.append(meta)
    report = {
        "name": cfg.name,
        "experiment-kind": cfg.kind,
        "seed": cfg.seed,
        "config": config_echo(cfg),
        "measured": outcome.measured,
        "criteria": outcome.criteria,
        "passed": all(c["passed"] for c in outcome.criteria),
        "series": series_meta,
    }
    return report, outcome.series, runtime


def write_outputs(report, series, runtime, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / REPORT).write_text(serialize(report))
    for s in series:
        with open(out_dir / f"{s['name']}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(s["columns"])
            for row in s["rows"]:
                w.writerow([repr(float(v)) for v in row])
    # wall-clock time lives outside the report so the report stays byte-identical
    (out_dir / TIMING).write_text(json.dumps({"runtime_seconds": runtime}) + "\n")
    return out_dir / REPORT


def run_config(path, out=None):
    """Load, run and write one config. Reports go to <out or config dir>/<name>/."""
    cfg = load_config(path)
    report, series, runtime = execute(cfg)
    root = Path(out) if out else Path(path).parent
    target = write_outputs(report, series, runtime, root / cfg.name)
    return report, target, runtime


# ---------------------------------------------------------------------------
# plot scripts

_HEAD = """# generated plot script; reads {csv} next to this file
import csv
from pathlib import Path

import matplotlib.pyplot as plt
{style}
here = Path(__file__).resolve().parent
with open(here / "{csv}") as fh:
    rows = list(csv.reader(fh))
cols = rows[0]
data = [[float(v) for v in r] for r in rows[1:]]
col = {{name: [r[i] for r in data] for i, name in enumerate(cols)}}
fig, ax = plt.subplots()
"""

_BODY = {
    "loglog": """x, y = col[cols[0]], col[cols[1]]
ax.loglog(x, y, "o", label="{name}")
{fit}ax.set_xlabel(cols[0])
ax.set_ylabel(cols[1])
ax.legend()
""",
    "kappa": """ax.plot(col["eta"], col["mu"], "o-", label="mu(eta)")
ax.axhline(0.5, color="k", lw=0.5)
ax.plot([0.0], [0.5], "r*", ms=10, label="mu(0) = 1/2")
ax.set_xlabel("eta")
ax.set_ylabel("mu")
ax.legend()
""",
    "heatmap": """sc = ax.scatter(col[cols[-2]], col["t"], c=col["quotient"], s=8)
fig.colorbar(sc, label="u/v")
ax.set_xlabel(cols[-2])
ax.set_ylabel("t")
ax.set_title("{name}")
""",
    "doubling": """pairs = sorted(zip(col["r1"], col["r2"], col["ratio"], col["bound"]))
ax.loglog([a / b for a, b, _, _ in pairs], [c for _, _, c, _ in pairs], "o", label="ratio")
ax.loglog([a / b for a, b, _, _ in pairs], [d for _, _, _, d in pairs], "x", label="lower bound")
ax.set_xlabel("r1/r2")
ax.legend()
""",
    "semilogy": """ax.semilogy(col["k"], [abs(v) for v in col["a"]], label="a_k")
ax.semilogy(col["k"], [abs(v) + 1e-300 for v in col["b"]], label="b_k")
ax.set_xlabel("k")
ax.legend()
""",
    "scatter": """sc = ax.scatter(col["x1"], col["t"], c=col[cols[-1]], s=6)
fig.colorbar(sc, label=cols[-1])
ax.set_xlabel("x1")
ax.set_ylabel("t")
""",
    "line": """for name in cols[1:]:
    ax.plot(col[cols[0]], col[name], "o-", label=name)
ax.set_xlabel(cols[0])
ax.legend()
""",
}

_TAIL = """fig.savefig(here / "{stem}.png", dpi=120)
"""


def emit_plots(report_path, style="default"):
    """Write one standalone script per CSV series of a report; returns (scripts, notes)."""
    report_path = Path(report_path)
    report = json.loads(report_path.read_text())
    scripts, notes = [], []
    for s in report.get("series", []):
        if not s.get("points"):
            notes.append(f"skipped empty series {s['name']}")
            continue
        body = _BODY.get(s["kind"], _BODY["line"])
        fit = ""
        if s["kind"] == "loglog" and isinstance(s.get("fit"), dict):
            f = s["fit"]
            fit = (f"ax.loglog(x, [{f['constant']!r} * r ** {f['exponent']!r} for r in x], \"-\", "
                   f"label=\"fit exponent {float(f['exponent']):.3f}\")\n")
        stem = f"plot_{s['name']}"
        head = _HEAD.format(csv=s["file"], style=f"plt.style.use({style!r})\n" if style != "default" else "")
        text = head + body.format(name=s["name"], fit=fit) + _TAIL.format(stem=stem)
        path = report_path.parent / f"{stem}.py"
        path.write_text(text)
        scripts.append(path)
    if not report.get("series"):
        notes.append("report has no CSV series; no plot scripts written")
    return scripts, notes
