"""Explicit barriers, pointwise checks of their differential inequalities, and growth fits.

One-sided barriers live on graph domains and use the regularized distance d:

    super:  K d^(1-eps) - t + |x'|^2      with (d_t - M+) phi >= eta d^(-1-eps)
    sub:    k d^(1+eps) + t - |x'|^2      with (d_t - M-) phi <= -eta d^(eps-1)

Slit barriers combine a cone solution of the self-similar problem with
quadratics that are caloric (super) or subcaloric (sub) for the heat operator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainRangeError, HypothesisViolation, NonPositiveDistanceError
from .geometry import LipschitzDomain, MollifierSpec, SlitDomain, lattice_spec, regularized_distance
from .grid import cylinder_mask
from .ou_spectral import _q1_normalizer, cone_value
from .solver import pucci_eval

KINDS = ("one-sided-super", "one-sided-sub", "slit-super", "slit-sub")


@dataclass(frozen=True)
class BarrierSpec:
    """Barrier parameters.

    ``K`` is the leading coefficient: K for the one-sided super barrier, k for
    the sub barrier, a for the slit super barrier and c0 for the slit sub
    barrier. ``eta`` weights the singular term of the margin. Slit kinds carry
    the eigenpair whose cone solution enters the formula.
    """

    kind: str
    eps: float
    K: float
    eta: float = 0.0
    domain: object = None
    pair: object = None
    distance: str = "regularized"
    mollifier: MollifierSpec = MollifierSpec()
    _scale: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown barrier kind {self.kind!r}")
        if not 0 < self.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        if self.K < 0:
            raise ConfigError("barrier coefficient must be nonnegative")
        if self.eta < 0:
            raise ConfigError("eta must be nonnegative")
        if self.distance not in ("regularized", "height"):
            raise ConfigError("distance must be 'regularized' or 'height'")
        if self.slit:
            if self.pair is None:
                raise ConfigError("slit barriers need an eigenpair")
            if self.eta > abs(self.pair.eta):
                raise ConfigError("eta must stay below the cone parameter of the eigenpair")
        elif self.domain is not None and not isinstance(self.domain, LipschitzDomain):
            raise ConfigError("one-sided barriers need a graph domain")

    @property
    def slit(self):
        return self.kind.startswith("slit")

    @property
    def upper(self):
        return self.kind.endswith("super")

    @property
    def n(self):
        return 1 if self.slit else self.domain.n

    def cone_scale(self):
        """sup of the cone solution over Q_1, so the barrier uses the normalized profile."""
        if not self._scale:
            self._scale.append(_q1_normalizer(self.pair))
        return self._scale[0]


def _distance(spec, P):
    dom = spec.domain
    n = dom.n
    sh = dom.height(P[..., :n], P[..., n])
    if np.any(sh <= 0):
        raise NonPositiveDistanceError("barrier evaluated on or below the graph")
    if spec.distance == "height" or dom.graph.name == "flat":
        return sh
    flat = P.reshape(-1, n + 1)
    return regularized_distance(dom, flat, spec.mollifier).reshape(P.shape[:-1])


def barrier_value(spec, point):
    """Evaluate the barrier at points (..., spatial dims + 1)."""
    P = np.asarray(point, dtype=float)
    scalar = P.ndim == 1
    P = np.atleast_2d(P)
    t = P[..., -1]
    if spec.slit:
        if P.shape[-1] != 3:
            raise DomainRangeError("slit barriers take points (x_n, x_{n+1}, t)")
        if np.any(t >= 0):
            raise DomainRangeError("slit barriers are defined for t < 0")
        X = P[..., :2]
        phi = cone_value(spec.pair, X, t, "cubic") / spec.cone_scale()
        xn, xs = X[..., 0], X[..., 1]
        n = 1
        if spec.upper:
            out = spec.K * phi + xn ** 2 - 2 * n * xs ** 2 - 2 * n * t
        else:
            neg = np.clip(-(xn + 0.25), 0, None)
            out = spec.K * (0.5 * phi + 2 * t + (4 * n + 13) * xs ** 2 - 16 * neg ** 2)
    else:
        n = spec.domain.n
        if P.shape[-1] != n + 1:
            raise DomainRangeError(f"expected points with {n + 1} coordinates")
        d = _distance(spec, P)
        quad = np.sum(P[..., :n - 1] ** 2, axis=-1)
        if spec.upper:
            out = spec.K * d ** (1 - spec.eps) - t + quad
        else:
            out = spec.K * d ** (1 + spec.eps) + t - quad
    return float(out[0]) if scalar else out


@dataclass
class MarginRecord:
    """Pointwise margins of the barrier inequality; nonnegative means satisfied."""

    min_margin: float
    margins: np.ndarray
    points: np.ndarray
    violations: list
    skipped: int

    @property
    def passed(self):
        return not self.violations

    def summary(self):
        return {"min_margin": self.min_margin, "used": int(len(self.margins)),
                "violations": len(self.violations), "skipped": self.skipped}


def _stencil(dim, h):
    """Offsets: center, +-h per axis, four corners per axis pair, +-h^2 in time."""
    E = np.eye(dim + 1)
    off = [np.zeros(dim + 1)]
    for i in range(dim):
        off += [h * E[i], -h * E[i]]
    pairs = [(i, j) for i in range(dim) for j in range(i + 1, dim)]
    for i, j in pairs:
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            off.append(si * h * E[i] + sj * h * E[j])
    k = h * h
    off += [k * E[dim], -k * E[dim]]
    return np.array(off), pairs


def _usable(spec, P, h_fd):
    """Samples whose whole stencil sits at distance >= 4 h_fd from the boundary set."""
    t = P[:, -1]
    if not spec.slit:
        n = spec.domain.n
        return spec.domain.height(P[:, :n], t) >= 4 * h_fd
    pair = spec.pair
    s = np.sqrt(np.clip(-t, 0, None))
    tip = pair.eta * s
    # distance to the slit {x_{n+1} = 0, x_n <= tip}
    dx = np.clip(P[:, 0] - tip, 0, None)
    dist = np.hypot(dx, P[:, 1])
    ok = (t <= -2 * h_fd * h_fd) & (dist >= 4 * h_fd)
    with np.errstate(divide="ignore", invalid="ignore"):
        reach = (np.linalg.norm(P[:, :2], axis=1) + 2 * h_fd) / np.sqrt(np.clip(-t - h_fd * h_fd, 1e-300, None))
    return ok & (reach <= pair.mesh.eval_radius)


def barrier_margin(spec, coeffs, samples, h_fd, tol=0.0):
    """Central-difference check of the barrier inequality at the samples.

    Super kinds: (d_t - M+) phi - eta d^(-1-eps). Sub kinds: -eta d^(eps-1) -
    (d_t - M-) phi. Slit kinds drop the singular term when eta = 0. Samples
    whose stencil comes within 4 h_fd of the boundary are skipped and counted.
    """
    P = np.atleast_2d(np.asarray(samples, dtype=float))
    keep = _usable(spec, P, h_fd)
    skipped = int(np.sum(~keep))
    P = P[keep]
    m = len(P)
    if m == 0:
        return MarginRecord(float("nan"), np.zeros(0), P, [], skipped)
    dim = P.shape[1] - 1
    h = float(h_fd)
    off, pairs = _stencil(dim, h)
    if spec.slit or spec.distance == "height" or spec.domain.graph.name == "flat":
        V = barrier_value(spec, (P[:, None, :] + off[None]).reshape(-1, dim + 1)).reshape(m, len(off))
    else:
        # one fixed quadrature lattice per stencil keeps the differences smooth
        n = spec.domain.n
        sh = spec.domain.height(P[:, :n], P[:, n])
        V = np.stack([barrier_value(replace(spec, mollifier=lattice_spec(sh[i] - 2 * h, spec.domain.graph,
                                                                         spec=spec.mollifier)), P[i] + off)
                      for i in range(m)])
    v0 = V[:, 0]
    H = np.zeros((m, dim, dim))
    for i in range(dim):
        H[:, i, i] = (V[:, 1 + 2 * i] - 2 * v0 + V[:, 2 + 2 * i]) / h ** 2
    base = 1 + 2 * dim
    for p, (i, j) in enumerate(pairs):
        c = V[:, base + 4 * p: base + 4 * p + 4]
        H[:, i, j] = H[:, j, i] = (c[:, 0] - c[:, 1] - c[:, 2] + c[:, 3]) / (4 * h * h)
    vt = (V[:, -2] - V[:, -1]) / (2 * h * h)
    eig = np.linalg.eigvalsh(H)
    if spec.slit:
        d = np.hypot(np.clip(P[:, 0] - spec.pair.eta * np.sqrt(-P[:, -1]), 0, None), P[:, 1])
    else:
        d = _distance(spec, P)
    if spec.upper:
        L = vt - pucci_eval(eig, coeffs.lam, coeffs.Lam, "+")
        margin = L - spec.eta * d ** (-1 - spec.eps)
    else:
        L = vt - pucci_eval(eig, coeffs.lam, coeffs.Lam, "-")
        margin = -spec.eta * d ** (spec.eps - 1) - L
    margin = np.atleast_1d(margin)
    bad = np.flatnonzero(margin < -tol)
    viol = [(P[i].tolist(), float(margin[i])) for i in bad]
    return MarginRecord(float(margin.min()), margin, P, viol, skipped)


def flat_margin_oracle(eps, K, eta, n, x_n, upper=True, lam=1.0, Lam=1.0):
    """Closed-form margin on a flat boundary, where d = x_n."""
    d = np.asarray(x_n, dtype=float)
    if upper:
        # d^(1-eps) is concave in x_n: M+ picks lam on the negative second derivative
        op = K * eps * (1 - eps) * lam * d ** (-1 - eps) - 1 - 2 * (n - 1) * Lam
        return op - eta * d ** (-1 - eps)
    # d^(1+eps) is convex: M- picks lam on the positive second derivative
    op = -K * eps * (1 + eps) * lam * d ** (eps - 1) + 1 + 2 * (n - 1) * Lam
    return -eta * d ** (eps - 1) - op


def boundary_samples(domain, count=256, seed=0):
    """Points on the lateral boundary, the bottom {t = -1} and the side {|x'| = 1} of Q_1 above the graph."""
    rng = np.random.default_rng(seed)
    n = domain.n
    out = {}
    xp = rng.uniform(-1, 1, (count, n - 1))
    if n > 1:
        xp /= np.maximum(1.0, np.linalg.norm(xp, axis=1, keepdims=True))
    t = rng.uniform(-1, 0, count)
    out["lateral"] = np.column_stack([xp, domain.graph(xp, t) + 1e-9, t])
    g = domain.graph(xp, -np.ones(count))
    xn = g + (1 - g) * rng.uniform(1e-3, 1, count)
    out["bottom"] = np.column_stack([xp, xn, -np.ones(count)])
    if n > 1:
        v = rng.normal(size=(count, n - 1))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        g = domain.graph(v, t)
        xn = g + (1 - g) * rng.uniform(1e-3, 1, count)
        out["side"] = np.column_stack([v, xn, t])
    return out


# ---------------------------------------------------------------------------
# comparison sandwich


@dataclass
class SandwichRecord:
    radius: float
    upper_gap: float
    lower_gap: float
    slack: float

    @property
    def holds(self):
        return self.upper_gap <= self.slack and self.lower_gap <= self.slack


def barrier_sandwich(field_, upper, lower, r=1.0, slack=0.0):
    """max(u - super) and max(sub - u) over domain nodes of Q_r strictly above the graph."""
    grid = field_.grid
    mask = cylinder_mask(field_, r)
    n = grid.domain.n
    up, lo = -np.inf, -np.inf
    for j, t in enumerate(field_.times):
        sel = mask[j] & (grid.domain.height(grid.X[..., :n], t) > 0)
        if not sel.any():
            continue
        X = grid.X[sel]
        P = np.column_stack([X, np.full(len(X), t)])
        u = field_.values[j][sel]
        if upper is not None:
            up = max(up, float(np.max(u - barrier_value(upper, P))))
        if lower is not None:
            lo = max(lo, float(np.max(barrier_value(lower, P) - u)))
    return SandwichRecord(r, up, lo, slack)


def largest_sandwich_radius(field_, upper, lower, radii, slack=0.0):
    """Largest radius in the list at which the sandwich holds, or None."""
    for r in sorted(radii, reverse=True):
        if barrier_sandwich(field_, upper, lower, r, slack).holds:
            return r
    return None


# ---------------------------------------------------------------------------
# growth exponents


@dataclass
class GrowthFit:
    """Least-squares fit log value = log C + exponent log r."""

    radii: list
    values: list
    exponent: float
    constant: float
    residual: float
    kind: str

    def to_dict(self):
        return {"kind": self.kind, "exponent": self.exponent, "constant": self.constant,
                "residual": self.residual, "radii": list(self.radii), "values": list(self.values)}


def dyadic_radii(first=2, last=6):
    return [2.0 ** -i for i in range(first, last + 1)]


def fit_power(radii, values, kind="custom"):
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    if np.any(np.diff(r) >= 0):
        raise ConfigError("radii must be strictly decreasing")
    if np.any(v <= 0):
        raise HypothesisViolation("growth fit needs positive values (v > 0)")
    A = np.column_stack([np.log(r), np.ones_like(r)])
    coef, *_ = np.linalg.lstsq(A, np.log(v), rcond=None)
    res = np.log(v) - A @ coef
    return GrowthFit([float(x) for x in r], [float(x) for x in v], float(coef[0]),
                     float(math.exp(coef[1])), float(np.sqrt(np.mean(res ** 2))), kind)


def ray_point(domain, r):
    """Spatial point r e_n (the x_n axis; x_{n+1} = 0 on slit domains)."""
    d = domain.spatial_dim
    x = np.zeros(d)
    x[domain.n - 1] = r
    return x


def growth_fit(field_, radii=None, kind="lower", t=0.0):
    """Exponent of u along the ray r e_n at time t (lower) or of sup_{Q_r} |u| (upper)."""
    grid = field_.grid
    dom = grid.domain
    radii = dyadic_radii() if radii is None else list(radii)
    if any(r < 4 * grid.h - 1e-12 or r > 0.75 for r in radii):
        raise ConfigError(f"radii must lie in [4h, 3/4] with h = {grid.h}")
    if kind == "upper":
        vals = []
        for r in radii:
            mask = cylinder_mask(field_, r)
            vals.append(float(np.max(np.abs(field_.values[mask]))))
        return fit_power(radii, vals, "upper")
    if kind != "lower":
        raise ConfigError("kind must be 'upper' or 'lower'")
    vals = []
    for r in radii:
        x = ray_point(dom, r)
        if isinstance(dom, SlitDomain):
            inside = float(dom.cone_height(x, t)) >= 0
        elif isinstance(dom, LipschitzDomain):
            inside = float(dom.height(x, t)) > 0
        else:
            inside = True
        if not inside:
            raise HypothesisViolation(f"ray point at r={r} lies outside the growth cone")
        v = field_.at(x, t)
        if v <= 0:
            raise HypothesisViolation(f"nonpositive value {v:.3g} at r={r}; the lower fit assumes v > 0")
        vals.append(v)
    return fit_power(radii, vals, "lower")
