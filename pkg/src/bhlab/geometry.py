"""Parabolic Lipschitz graphs, one-sided and slit domains, regularized distance.

Space-time points are arrays whose last axis holds the spatial coordinates
followed by time: ``(x', x_n, t)`` for one-sided domains and
``(x', x_n, x_{n+1}, t)`` for slit domains.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import qmc

from .errors import ConfigError, DomainRangeError, NonPositiveDistanceError, NumericError


def _tri(s, period):
    """Distance from s to the nearest multiple of period (1-Lipschitz, zero at 0)."""
    return np.abs(np.mod(s / period + 0.5, 1.0) - 0.5) * period


def _bshape(xp, t):
    return np.broadcast_shapes(xp.shape[:-1], np.shape(t))


class GraphFunction:
    """A function Gamma(x', t) with |Gamma(p) - Gamma(q)| <= L (|x'-y'| + |t-s|^(1/2)).

    ``func(xp, t)`` receives ``xp`` with trailing axis of length ``n - 1`` and a
    time array broadcastable against ``xp[..., 0]``.
    """

    def __init__(self, n, func, L, R=1.0, name="custom", params=None, verify=True):
        if n < 1:
            raise ConfigError("graph dimension n must be >= 1")
        self.n = int(n)
        self.func = func
        self.L = float(L)
        self.R = float(R)
        self.name = name
        self.params = dict(params or {})
        g0 = float(self(np.zeros(self.n - 1), 0.0))
        if abs(g0) > 1e-12:
            raise ConfigError(f"graph must vanish at the origin, got Gamma(0,0) = {g0}")
        if verify:
            fitted = lipschitz_verify(self, default_graph_samples(self))
            if fitted > self.L + 1e-9:
                raise ConfigError(
                    f"graph '{name}' has sampled Lipschitz constant {fitted:.6g} > declared {self.L:.6g}")

    def __call__(self, xp, t):
        xp = np.asarray(xp, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.n == 1:
            lead = xp.shape[:-1] if (xp.ndim and xp.shape[-1] == 0) else ()
            xp = np.zeros(np.broadcast_shapes(lead, t.shape) + (0,))
        elif xp.shape[-1:] != (self.n - 1,):
            raise DomainRangeError(f"expected x' with {self.n - 1} components")
        shape = _bshape(xp, t)
        xp = np.broadcast_to(xp, shape + (self.n - 1,))
        t = np.broadcast_to(t, shape)
        return np.asarray(self.func(xp, t), dtype=float).reshape(shape)

    def rescaled(self, r):
        """Graph of the parabolic dilation {(x,t): (r x, r^2 t) in Omega}."""
        base = self
        return GraphFunction(self.n, lambda xp, t: base(r * xp, r * r * t) / r, self.L, self.R,
                             name=f"{self.name}@{r:g}", params=self.params, verify=False)

    def describe(self):
        return {"name": self.name, "n": self.n, "L": self.L, "R": self.R, **self.params}

    # -- standard families -------------------------------------------------
    @classmethod
    def flat(cls, n, R=1.0):
        return cls(n, lambda xp, t: np.zeros(_bshape(xp, t)), 0.0, R, name="flat")

    @classmethod
    def tilted(cls, slope, n=2, R=1.0):
        s = np.atleast_1d(np.asarray(slope, dtype=float))
        if s.size != n - 1:
            raise ConfigError("tilted graph needs n-1 slope components")
        return cls(n, lambda xp, t: xp @ s + 0.0 * t, float(np.linalg.norm(s)), R,
                   name="tilted", params={"slope": s.tolist()})

    @classmethod
    def sawtooth(cls, L, n=2, period=0.25, time_period=0.0625, R=1.0):
        """L times a zigzag in x_1 plus the square root of a zigzag in t."""

        def f(xp, t):
            out = np.sqrt(_tri(t, time_period))
            if n > 1:
                out = out + _tri(xp[..., 0], period)
            return L * out

        return cls(n, f, L, R, name="sawtooth",
                   params={"period": period, "time-period": time_period})

    @classmethod
    def time_root(cls, L, n=1, R=1.0):
        return cls(n, lambda xp, t: L * np.sqrt(np.abs(t)) + 0.0 * xp.sum(-1), L, R, name="time-root")

    @classmethod
    def dini(cls, omega, n=1, R=1.0, label="dini"):
        """Gamma = s omega(s) with s = |x'| + |t|^(1/2); the set {x_n > s omega(s)} is the domain."""
        smax = R + R
        s = np.linspace(0.0, smax, 20001)
        G = s * omega(s)
        slope = float(np.max(np.abs(np.diff(G)) / np.diff(s)))
        L = slope * (1 + 1e-6) + 1e-12

        def f(xp, t):
            ss = np.linalg.norm(xp, axis=-1) + np.sqrt(np.abs(t))
            return ss * omega(ss)

        return cls(n, f, L, R, name=label)

    @classmethod
    def from_samples(cls, axes, values, L, R=1.0, verify=True):
        """Multilinear interpolant of lattice samples; axes are the x' axes then t."""
        axes = [np.asarray(a, dtype=float) for a in axes]
        values = np.asarray(values, dtype=float)
        n = len(axes)
        interp = RegularGridInterpolator(axes, values, method="linear")
        lo = np.array([a[0] for a in axes])
        hi = np.array([a[-1] for a in axes])
        samples = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        fitted = _pairwise_lipschitz(samples[:, :-1], samples[:, -1], values.reshape(-1))
        if verify and fitted > L + 1e-9:
            raise ConfigError(f"sampled graph Lipschitz constant {fitted:.6g} exceeds declared {L:.6g}")

        def f(xp, t):
            pts = np.concatenate([xp, t[..., None]], axis=-1)
            pts = np.clip(pts, lo, hi)
            return interp(pts.reshape(-1, n)).reshape(t.shape)

        return cls(n, f, L, R, name="samples", verify=False)


def _pairwise_lipschitz(xp, t, g):
    best = 0.0
    for i in range(len(t) - 1):
        dx = np.linalg.norm(xp[i + 1:] - xp[i], axis=-1) if xp.shape[1] else 0.0
        dist = dx + np.sqrt(np.abs(t[i + 1:] - t[i]))
        ok = dist > 0
        if np.any(ok):
            best = max(best, float(np.max(np.abs(g[i + 1:] - g[i])[ok] / dist[ok])))
    return best


def default_graph_samples(graph, count=256, seed=7):
    """Deterministic Halton cloud in B'_R x [-R^2, 0] as an (N, n) array of (x', t)."""
    eng = qmc.Halton(d=graph.n, scramble=True, seed=seed)
    u = eng.random(count)
    xp = (2 * u[:, :-1] - 1) * graph.R
    t = -u[:, -1] * graph.R ** 2
    return np.concatenate([xp, t[:, None]], axis=1)


def lipschitz_verify(graph, samples):
    """Largest difference quotient of the graph over all pairs of (x', t) samples."""
    samples = np.asarray(samples, dtype=float)
    xp, t = samples[:, :-1], samples[:, -1]
    return _pairwise_lipschitz(xp, t, graph(xp, t))


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class LipschitzDomain:
    """Region {x_n > Gamma(x', t)} inside Q_R."""

    graph: GraphFunction
    R: float = 1.0
    kind: str = "one-sided"

    @property
    def n(self):
        return self.graph.n

    @property
    def spatial_dim(self):
        return self.graph.n

    @property
    def L(self):
        return self.graph.L

    def height(self, x, t):
        x = np.asarray(x, dtype=float)
        return x[..., -1] - self.graph(x[..., :-1], t)

    def rescaled(self, r):
        return LipschitzDomain(self.graph.rescaled(r), self.R)

    def describe(self):
        return {"kind": self.kind, "R": self.R, "graph": self.graph.describe()}


@dataclass(frozen=True)
class SlitDomain:
    """Q_R minus E = {x_{n+1} = 0, x_n <= Gamma(x', t)}; spatial dimension n + 1."""

    graph: GraphFunction
    R: float = 1.0
    kind: str = "slit"

    @property
    def n(self):
        return self.graph.n

    @property
    def spatial_dim(self):
        return self.graph.n + 1

    @property
    def L(self):
        return self.graph.L

    def tip_height(self, x, t):
        """x_n - Gamma(x', t): positive past the slit edge."""
        x = np.asarray(x, dtype=float)
        return x[..., -2] - self.graph(x[..., :-2], t)

    def on_slit(self, x, t, tol=0.0):
        x = np.asarray(x, dtype=float)
        return (np.abs(x[..., -1]) <= tol) & (self.tip_height(x, t) <= 0)

    def cone_height(self, x, t):
        """x_n - Gamma + 10|x_{n+1}|, nonnegative on the growth cone."""
        x = np.asarray(x, dtype=float)
        return self.tip_height(x, t) + 10.0 * np.abs(x[..., -1])

    def describe(self):
        return {"kind": self.kind, "R": self.R, "graph": self.graph.describe()}


@dataclass(frozen=True)
class BoxDomain:
    """The whole cylinder Q_R, used for interior experiments."""

    n: int
    R: float = 1.0
    kind: str = "box"

    @property
    def spatial_dim(self):
        return self.n

    def describe(self):
        return {"kind": self.kind, "R": self.R, "n": self.n}


def _split(domain, point):
    p = np.asarray(point, dtype=float)
    d = domain.spatial_dim
    if p.shape[-1] != d + 1:
        raise DomainRangeError(f"expected points with {d + 1} coordinates, got {p.shape[-1]}")
    return p[..., :d], p[..., d]


def in_cylinder(domain, point, tol=1e-12):
    """Membership in the closed cylinder Q_R (ball in x', interval in the rest)."""
    x, t = _split(domain, point)
    R = domain.R
    nlat = domain.n - 1
    rad = np.linalg.norm(x[..., :nlat], axis=-1) if nlat else np.zeros(t.shape)
    ok = (rad <= R + tol) & (t <= tol) & (t >= -R * R - tol)
    ok &= np.all(np.abs(x[..., nlat:]) <= R + tol, axis=-1)
    return ok


def signed_height(domain, point):
    """x_n - Gamma(x', t); negative outside the domain."""
    if not np.all(in_cylinder(domain, point)):
        raise DomainRangeError("point outside Q_R")
    x, t = _split(domain, point)
    out = domain.height(x, t)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# regularized distance

KERNEL_K = 3.75  # L1 norm of the derivative of the time kernel 30 s^2 (1-s)^2
SPACE_POWER = 4  # space kernel (1 - |y|^2)^4, C^3 so second differences converge


@dataclass(frozen=True)
class MollifierSpec:
    """Quadrature and bisection settings for the regularized distance.

    With ``lattice = (dx, dt)`` the mollification uses nodes fixed in absolute
    coordinates instead of Gauss nodes that move with the point, so the result
    is as smooth in (x, t) as the kernels. Finite differences need this.
    """

    order: int = 8
    rtol: float = 1e-10
    max_iter: int = 200
    lattice: tuple = None


def _space_kernel(m, order):
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)
    z, w = np.polynomial.legendre.leggauss(order)
    if m == 1:
        y = z[:, None]
        wt = w * (1 - z ** 2) ** SPACE_POWER
    else:
        grids = np.meshgrid(*([z] * m), indexing="ij")
        y = np.stack(grids, axis=-1).reshape(-1, m)
        wt = np.prod(np.stack(np.meshgrid(*([w] * m), indexing="ij"), -1).reshape(-1, m), axis=1)
        wt = wt * np.clip(1 - np.sum(y ** 2, axis=1), 0, None) ** SPACE_POWER
        keep = wt > 0
        y, wt = y[keep], wt[keep]
    return y, wt / wt.sum()


def _time_kernel(order):
    z, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (z + 1)
    wt = 0.5 * w * 30 * s ** 2 * (1 - s) ** 2
    return s, wt / wt.sum()


def mollified_graph(graph, xp, t, rho, spec=MollifierSpec()):
    """Double mollification of Gamma at spatial scale rho/A and time scale rho^2/(2(1+K)^2 A^2)."""
    A = 4 * math.sqrt(graph.L ** 2 + 1)
    ct = 1.0 / (2 * (1 + KERNEL_K) ** 2 * A ** 2)
    if spec.lattice is not None:
        return _lattice_mollify(graph, xp, t, rho, A, ct, *spec.lattice)
    y, wy = _space_kernel(graph.n - 1, spec.order)
    s, ws = _time_kernel(spec.order)
    N = len(rho)
    X = xp[:, None, None, :] - (rho / A)[:, None, None, None] * y[None, :, None, :]
    T = t[:, None, None] - ct * (rho ** 2)[:, None, None] * s[None, None, :]
    X = np.broadcast_to(X, (N, len(wy), len(ws), graph.n - 1))
    T = np.broadcast_to(T, (N, len(wy), len(ws)))
    G = graph(X, T)
    return np.einsum("njk,j,k->n", G, wy, ws)


def _lattice_nodes(center, width, step):
    """Absolute lattice nodes covering [center - width, center + width] for each row."""
    count = int(math.ceil(2 * np.max(width) / step)) + 3
    first = np.floor((center - width) / step)
    return (first[:, None] + np.arange(count)[None, :]) * step


def _lattice_mollify(graph, xp, t, rho, A, ct, dx, dt):
    m = graph.n - 1
    N = len(rho)
    sig = ct * rho ** 2
    S = _lattice_nodes(t - 0.5 * sig, 0.5 * sig, dt)
    u = (t[:, None] - S) / sig[:, None]
    ws = np.where((u > 0) & (u < 1), u ** 2 * (1 - u) ** 2, 0.0)
    ws /= ws.sum(axis=1, keepdims=True)
    if m == 0:
        G = graph(np.zeros(S.shape + (0,)), S)
        return np.einsum("nk,nk->n", G, ws)
    eps = rho / A
    per = [_lattice_nodes(xp[:, i], eps, dx) for i in range(m)]
    Z = np.stack(np.meshgrid(*[np.arange(p.shape[1]) for p in per], indexing="ij"), -1).reshape(-1, m)
    Y = np.stack([per[i][:, Z[:, i]] for i in range(m)], axis=-1)
    r2 = np.sum((xp[:, None, :] - Y) ** 2, axis=-1) / eps[:, None] ** 2
    wy = np.clip(1 - r2, 0, None) ** SPACE_POWER
    wy /= wy.sum(axis=1, keepdims=True)
    keep = np.flatnonzero(wy.max(axis=0) > 0)
    Y, wy = Y[:, keep], wy[:, keep]
    X = np.broadcast_to(Y[:, :, None, :], (N, Y.shape[1], S.shape[1], m))
    T = np.broadcast_to(S[:, None, :], X.shape[:-1])
    G = graph(X, T)
    return np.einsum("njk,nj,nk->n", G, wy, ws)


def lattice_spec(height, graph, per_scale=12, spec=MollifierSpec()):
    """Fixed lattice resolving the kernels at every rho >= height/2."""
    A = 4 * math.sqrt(graph.L ** 2 + 1)
    ct = 1.0 / (2 * (1 + KERNEL_K) ** 2 * A ** 2)
    rho = 0.5 * height
    return replace(spec, lattice=(rho / A / per_scale, ct * rho * rho / per_scale))


def regularized_distance(domain, point, spec=MollifierSpec()):
    """Root rho of F(x, t, rho) = rho, where F is x_n minus the mollified graph.

    Bisection on [sh/2, 3 sh/2] with sh the signed height, finished with one
    regula falsi step inside the final bracket.
    """
    x, t = _split(domain, point)
    scalar = np.ndim(t) == 0
    x = np.atleast_2d(x)
    t = np.atleast_1d(t)
    graph = domain.graph
    xp, xn = x[:, :-1], x[:, -1]
    sh = xn - graph(xp, t)
    if np.any(sh <= 0):
        raise NonPositiveDistanceError(f"point on or below the graph (min height {sh.min():.3g})")

    def G(rho):
        return xn - mollified_graph(graph, xp, t, rho, spec) - rho

    lo, hi = 0.5 * sh, 1.5 * sh
    glo, ghi = G(lo), G(hi)
    if np.any(glo < 0) or np.any(ghi > 0):
        bad = int(np.argmax((glo < 0) | (ghi > 0)))
        raise NumericError("fixed point not bracketed",
                           {"index": bad, "height": float(sh[bad]), "G_lo": float(glo[bad]),
                            "G_hi": float(ghi[bad])})
    for it in range(spec.max_iter):
        if np.all(hi - lo <= spec.rtol * 0.5 * (hi + lo)):
            break
        mid = 0.5 * (lo + hi)
        gm = G(mid)
        up = gm > 0
        lo = np.where(up, mid, lo)
        glo = np.where(up, gm, glo)
        hi = np.where(up, hi, mid)
        ghi = np.where(up, ghi, gm)
    else:
        raise NumericError("bisection did not converge",
                           {"iterations": spec.max_iter, "max_width": float(np.max(hi - lo))})
    den = glo - ghi
    safe = den > 0
    root = np.where(safe, lo + glo * (hi - lo) / np.where(safe, den, 1.0), 0.5 * (lo + hi))
    root = np.clip(root, lo, hi)
    return float(root[0]) if scalar else root


@dataclass(frozen=True)
class DerivativeBounds:
    max_grad: float
    min_dn: float
    max_stat: float
    C2: float
    used: int
    skipped: int


def distance_derivative_bounds(domain, samples, h_fd, spec=MollifierSpec()):
    """Finite-difference statistics of the regularized distance.

    Spatial differences use step h_fd, the time difference uses the parabolic
    step h_fd^2. Samples closer than 4 h_fd to the graph are skipped.
    """
    P = np.atleast_2d(np.asarray(samples, dtype=float))
    n = domain.n
    sh = domain.height(P[:, :n], P[:, n])
    keep = sh >= 4 * h_fd
    skipped = int(np.sum(~keep))
    if skipped:
        warnings.warn(f"{skipped} samples within 4*h_fd of the graph were skipped")
    P = P[keep]
    m = len(P)
    if m == 0:
        return DerivativeBounds(float("nan"), float("nan"), float("nan"), float("nan"), 0, skipped)
    h = float(h_fd)
    k = h * h
    offsets = [np.zeros(n + 1)]
    E = np.eye(n + 1)
    for i in range(n):
        offsets += [h * E[i], -h * E[i]]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for i, j in pairs:
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            offsets.append(si * h * E[i] + sj * h * E[j])
    offsets += [k * E[n], -k * E[n]]
    off = np.array(offsets)
    D = np.empty((m, len(off)))
    for i in range(m):
        local = lattice_spec(float(sh[keep][i]) - 2 * h, domain.graph, spec=spec)
        D[i] = regularized_distance(domain, P[i] + off, local)
    d0 = D[:, 0]
    grad = np.stack([(D[:, 1 + 2 * i] - D[:, 2 + 2 * i]) / (2 * h) for i in range(n)], axis=1)
    H = np.zeros((m, n, n))
    for i in range(n):
        H[:, i, i] = (D[:, 1 + 2 * i] - 2 * d0 + D[:, 2 + 2 * i]) / h ** 2
    base = 1 + 2 * n
    for p, (i, j) in enumerate(pairs):
        c = D[:, base + 4 * p: base + 4 * p + 4]
        H[:, i, j] = H[:, j, i] = (c[:, 0] - c[:, 1] - c[:, 2] + c[:, 3]) / (4 * h * h)
    dt = (D[:, -2] - D[:, -1]) / (2 * k)
    hess = np.max(np.abs(np.linalg.eigvalsh(H)), axis=1)
    stat = d0 * (np.abs(dt) + hess)
    max_stat = float(np.max(stat))
    L = domain.L
    C2 = max_stat / L if L > 0 else 0.0
    return DerivativeBounds(float(np.max(np.linalg.norm(grad, axis=1))), float(np.min(grad[:, -1])),
                            max_stat, C2, m, skipped)


@dataclass(frozen=True)
class ScalingCheck:
    passed: bool
    min_ratio: float
    max_ratio: float
    violations: list
    skipped: int

    def __bool__(self):
        return self.passed


def scaled_signed_height_check(domain, r, samples, scaled_domain=None, spec=MollifierSpec()):
    """Check d_tilde/3 <= d(r x, r^2 t)/r <= 3 d_tilde at the samples.

    ``scaled_domain`` defaults to the exact parabolic rescaling; passing a
    different domain gives a negative control.
    """
    if not 0 < r < 1:
        raise ConfigError("scale r must lie in (0, 1)")
    P = np.atleast_2d(np.asarray(samples, dtype=float))
    n = domain.n
    other = scaled_domain if scaled_domain is not None else domain.rescaled(r)
    big = P.copy()
    big[:, :n] *= r
    big[:, n] *= r * r
    ok = (domain.height(big[:, :n], big[:, n]) > 0) & (other.height(P[:, :n], P[:, n]) > 0)
    P, big = P[ok], big[ok]
    d = regularized_distance(domain, big, spec) / r
    dt = regularized_distance(other, P, spec)
    ratio = d / dt
    bad = np.where((ratio < 1 / 3) | (ratio > 3))[0]
    viol = [(P[i].tolist(), float(ratio[i])) for i in bad]
    return ScalingCheck(len(bad) == 0, float(ratio.min()), float(ratio.max()), viol, int(np.sum(~ok)))


# ---------------------------------------------------------------------------
# slit cones


@dataclass(frozen=True)
class SlitCone:
    """C^+_eta = {x_n <= eta (|x'| + |t|^(1/2)), x_{n+1} = 0}; the minus cone uses -eta."""

    sign: int
    eta: float

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ConfigError("cone sign must be +1 or -1")
        if not -1 / 3 < self.eta < 1 / 3:
            raise ConfigError("cone parameter must lie in (-1/3, 1/3)")


def cone_membership(cone, point, h=None):
    """Membership in the cone; with grid spacing h the slit plane is |x_{n+1}| < h/2."""
    p = np.asarray(point, dtype=float)
    xp, xn, xs, t = p[..., :-3], p[..., -3], p[..., -2], p[..., -1]
    rad = np.linalg.norm(xp, axis=-1) if xp.shape[-1] else 0.0
    edge = cone.sign * cone.eta * (rad + np.sqrt(np.abs(t)))
    plane = (xs == 0) if h is None else (np.abs(xs) < 0.5 * h)
    out = (xn <= edge) & plane
    return bool(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# sample files


def write_graph_samples(path, graph, axes):
    """CSV with header x1,...,x_{n-1},t,gamma over the tensor lattice of axes."""
    axes = [np.asarray(a, dtype=float) for a in axes]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    vals = graph(pts[:, :-1], pts[:, -1])
    header = [f"x{i + 1}" for i in range(graph.n - 1)] + ["t", "gamma"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row, v in zip(pts, vals):
            w.writerow([repr(float(c)) for c in row] + [repr(float(v))])


def read_graph_samples(path, L, R=1.0):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float)
    if header[-2:] != ["t", "gamma"]:
        raise ConfigError(f"{path}: header must end with t,gamma")
    naxes = len(header) - 1
    axes = [np.unique(data[:, i]) for i in range(naxes)]
    shape = tuple(len(a) for a in axes)
    if np.prod(shape) != len(data):
        raise ConfigError(f"{path}: samples do not form a tensor lattice")
    order = np.lexsort(data[:, :naxes].T[::-1])
    values = data[order, -1].reshape(shape)
    return GraphFunction.from_samples(axes, values, L, R)
