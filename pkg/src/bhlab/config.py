"""Experiment configs: TOML with kebab-case keys, validated per experiment kind."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .geometry import BoxDomain, GraphFunction, LipschitzDomain, SlitDomain, read_graph_samples
from .solver import OperatorCoefficients

KINDS = ("growth", "special", "quotient", "carleson", "kappa", "hopf", "obstacle", "decompose", "barrier",
         "distance", "convergence", "comparison", "expansion", "determinism")

# parameters each kind cannot run without
REQUIRED = {
    "quotient": ("gamma",),
    "carleson": (),
    "special": ("eps",),
    "expansion": ("eps", "alpha"),
    "kappa": ("eta-list",),
    "decompose": ("alpha",),
    "hopf": ("alpha",),
    "obstacle": ("gamma",),
    "barrier": ("barrier", "eps", "K"),
    "determinism": ("configs",),
}

NEEDS_DOMAIN = ("growth", "special", "quotient", "carleson", "barrier", "distance", "convergence",
                "comparison", "expansion")


@dataclass(frozen=True)
class DomainSpec:
    kind: str = "one-sided"
    graph: str = "flat"
    n: int = 1
    lipschitz: float = 0.0
    slope: tuple = ()
    radius: float = 1.0
    period: float = 0.25
    time_period: float = 0.0625
    file: str = None
    label: str = None

    def name(self):
        if self.label:
            return self.label
        if self.graph in ("flat", "file"):
            tag = self.graph
        elif self.graph == "tilted":
            tag = f"tilted-L{math.hypot(*self.slope):g}"
        else:
            tag = f"{self.graph}-L{self.lipschitz:g}"
        return f"{self.kind}-{tag}-n{self.n}"


@dataclass(frozen=True)
class OperatorSpec:
    kind: str = "heat"
    matrix: tuple = None
    lam: float = None
    Lam: float = None


@dataclass(frozen=True)
class GridSpec:
    h: tuple = (1 / 32,)
    c_cfl: float = 1.0


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    seed: int
    domains: list
    operator: OperatorSpec
    rhs: dict
    grid: GridSpec
    parameters: dict
    acceptance: dict
    raw: dict
    path: Path = None
    extras: dict = field(default_factory=dict)

    @property
    def domain(self):
        return self.domains[0] if self.domains else None

    def param(self, key, default=None):
        return self.parameters.get(key, default)

    def numbers(self, key, default=None):
        """A parameter list of numbers; strings like '1/32' are accepted."""
        vals = self.parameters.get(key, default)
        if vals is None:
            raise ConfigError(f"parameters.{key}: required")
        vals = vals if isinstance(vals, list) else [vals]
        return [_number(v, f"parameters.{key}") for v in vals]

    def threshold(self, key, default=None):
        return self.acceptance.get(key, default)


def _number(v, where):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        if isinstance(v, str):
            try:
                return _fraction(v)
            except ValueError:
                pass
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _fraction(s):
    """'1/32' or '0.25' as a float."""
    if "/" in s:
        a, b = s.split("/", 1)
        return float(a) / float(b)
    return float(s)


def _domain(tbl, where):
    allowed = {"kind", "graph", "n", "lipschitz", "slope", "radius", "period", "time-period", "file", "label"}
    extra = set(tbl) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    kind = tbl.get("kind", "one-sided")
    if kind not in ("one-sided", "slit", "box"):
        raise ConfigError(f"{where}.kind: expected one-sided, slit or box, got {kind!r}")
    graph = tbl.get("graph", "flat")
    if graph not in ("flat", "tilted", "sawtooth", "time-root", "file"):
        raise ConfigError(f"{where}.graph: unknown graph {graph!r}")
    n = int(tbl.get("n", 1))
    if n < 1:
        raise ConfigError(f"{where}.n: must be >= 1")
    L = _number(tbl.get("lipschitz", 0.0), f"{where}.lipschitz")
    if L < 0:
        raise ConfigError(f"{where}.lipschitz: must be nonnegative")
    slope = tuple(_number(s, f"{where}.slope") for s in tbl.get("slope", ()))
    if graph == "tilted" and len(slope) != n - 1:
        raise ConfigError(f"{where}.slope: tilted graph needs n-1 = {n - 1} components")
    if graph == "file" and "file" not in tbl:
        raise ConfigError(f"{where}.file: graph = 'file' needs a CSV path")
    return DomainSpec(kind, graph, n, L, slope, _number(tbl.get("radius", 1.0), f"{where}.radius"),
                      _number(tbl.get("period", 0.25), f"{where}.period"),
                      _number(tbl.get("time-period", 0.0625), f"{where}.time-period"),
                      tbl.get("file"), tbl.get("label"))


def _kebab(obj, where):
    """Reject snake_case keys so typos surface early."""
    if isinstance(obj, dict):
        for k, v in obj.items():
            if "_" in k:
                raise ConfigError(f"{where}: key {k!r} must be kebab-case")
            _kebab(v, f"{where}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _kebab(v, f"{where}[{i}]")


def parse_config(raw, path=None):
    _kebab(raw, "config")
    kind = raw.get("experiment-kind")
    if kind is None:
        raise ConfigError("config: missing field 'experiment-kind'")
    if kind not in KINDS:
        raise ConfigError(f"experiment-kind: unknown kind {kind!r}")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed: expected a nonnegative integer")
    dom = raw.get("domain", [])
    tables = dom if isinstance(dom, list) else [dom]
    domains = [_domain(t, f"domain[{i}]" if isinstance(dom, list) else "domain") for i, t in enumerate(tables)]
    if kind in NEEDS_DOMAIN and not domains:
        raise ConfigError(f"domain: experiment kind {kind!r} needs a domain table")
    op = raw.get("operator", {})
    okind = op.get("kind", "heat")
    if okind not in ("heat", "constant"):
        raise ConfigError(f"operator.kind: expected heat or constant, got {okind!r}")
    matrix = op.get("matrix")
    if okind == "constant" and matrix is None:
        raise ConfigError("operator.matrix: constant operator needs a matrix")
    lam = op.get("lambda")
    Lam = op.get("Lambda", op.get("big-lambda"))
    if lam is not None and Lam is not None and not 0 < lam <= Lam:
        raise ConfigError("operator.lambda: need 0 < lambda <= Lambda")
    operator = OperatorSpec(okind, None if matrix is None else tuple(map(tuple, matrix)), lam, Lam)
    g = raw.get("grid", {})
    hs = g.get("h", [1 / 32])
    hs = tuple(_number(v, "grid.h") for v in (hs if isinstance(hs, list) else [hs]))
    if any(not 0 < h <= 0.5 for h in hs):
        raise ConfigError("grid.h: spacings must lie in (0, 1/2]")
    c_cfl = _number(g.get("c-cfl", 1.0), "grid.c-cfl")
    if c_cfl <= 0:
        raise ConfigError("grid.c-cfl: must be positive")
    params = dict(raw.get("parameters", {}))
    for key in REQUIRED.get(kind, ()):
        if key not in params:
            raise ConfigError(f"parameters.{key}: required for experiment kind {kind!r}")
    for key in ("eps", "gamma", "alpha"):
        if key in params:
            v = _number(params[key], f"parameters.{key}")
            if not 0 < v < 1:
                raise ConfigError(f"parameters.{key}: must lie in (0, 1)")
            params[key] = v
    cfg = ExperimentConfig(kind, raw.get("name", Path(path).stem if path else kind), seed, domains, operator,
                           dict(raw.get("rhs", {})), GridSpec(hs, c_cfl), params, dict(raw.get("acceptance", {})),
                           raw, Path(path) if path else None)
    return cfg


def load_config(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such config file") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw, path)


def build_graph(spec, base=None):
    n, L, R = spec.n, spec.lipschitz, spec.radius
    if spec.graph == "flat":
        return GraphFunction.flat(n, R)
    if spec.graph == "tilted":
        return GraphFunction.tilted(list(spec.slope), n, R)
    if spec.graph == "sawtooth":
        return GraphFunction.sawtooth(L, n, spec.period, spec.time_period, R)
    if spec.graph == "time-root":
        return GraphFunction.time_root(L, n, R)
    p = Path(spec.file)
    if not p.is_absolute() and base is not None:
        p = Path(base) / p
    return read_graph_samples(p, L, R)


def build_domain(spec, base=None):
    if spec.kind == "box":
        return BoxDomain(spec.n, spec.radius)
    graph = build_graph(spec, base)
    if spec.kind == "slit":
        return SlitDomain(graph, spec.radius)
    return LipschitzDomain(graph, spec.radius)


def build_operator(spec, dim):
    if spec.kind == "heat":
        return OperatorCoefficients.heat(dim)
    M = np.asarray(spec.matrix, dtype=float)
    if M.shape != (dim, dim):
        raise ConfigError(f"operator.matrix: expected shape {(dim, dim)}, got {M.shape}")
    return OperatorCoefficients.constant(M, spec.lam, spec.Lam)


def config_echo(cfg):
    """The raw config with floats normalized, for provenance in reports."""
    def norm(v):
        if isinstance(v, dict):
            return {k: norm(v[k]) for k in sorted(v)}
        if isinstance(v, list):
            return [norm(x) for x in v]
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        return v
    return norm(cfg.raw)
