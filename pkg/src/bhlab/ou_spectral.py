"""Principal Ornstein-Uhlenbeck eigenpairs outside a thin cone, and the caloric cone solutions they generate.

For phi solving Delta phi - (x/2).grad phi + rho phi = 0 off the slit
{x_n <= eta, x_{n+1} = 0}, the function |t|^(mu/2) phi(x/|t|^(1/2)) with mu = 2 rho
is caloric and parabolically homogeneous of degree mu. The even-in-x_{n+1}
problem is reduced to the half-plane x_{n+1} >= 0 with a natural (Neumann)
condition off the slit, and discretized by piecewise linear elements with the
Gaussian weight in both forms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import qmc

from .errors import ConfigError, DiscretizationError, DomainRangeError, EigenSignError, \
    ExtrapolationError, NumericError
from .grid import EXTERIOR, Field

# degree-5 Dunavant rule on the reference triangle: barycentric points and weights (sum 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_BARY = np.array([[1 / 3, 1 / 3, 1 / 3],
                  [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
                  [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]])
_WQ = np.array([0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3)


def _graded_axis(lo, hi, anchor, h, ell, cap):
    """Nodes from lo to hi through anchor, spacing h (1 + |x - anchor|/ell) capped at cap*h."""
    def side(length):
        if length <= 0:
            return np.zeros(1)
        pts = [0.0]
        while pts[-1] < length:
            d = pts[-1]
            pts.append(d + min(h * (1 + d / ell), cap * h))
        pts = np.array(pts)
        # stretch so the last node lands on the end
        return pts * (length / pts[-1])
    left = anchor - side(anchor - lo)[::-1]
    right = anchor + side(hi - anchor)[1:]
    return np.concatenate([left, right])


@dataclass(frozen=True)
class SelfSimilarMesh:
    """Graded tensor mesh of [-R_tr, R_tr] x [0, R_tr] split into right triangles.

    ``h`` is the spacing at the slit tip; spacing grows linearly with distance
    from the tip (length scale ``ell``) up to ``cap*h``. Halving h halves every
    cell, so two meshes form a refinement pair.
    """

    h: float = 1 / 64
    R_tr: float = 8.0
    ell: float = 0.125
    cap: float = 16.0
    n: int = 1
    eval_radius: float = 6.0

    def __post_init__(self):
        if self.n != 1:
            raise ConfigError("only the planar self-similar problem (n = 1) is implemented")
        if not 0 < self.h <= 0.25:
            raise ConfigError("mesh spacing must lie in (0, 1/4]")

    def axes(self, eta):
        ax = _graded_axis(-self.R_tr, self.R_tr, eta, self.h, self.ell, self.cap)
        ay = _graded_axis(0.0, self.R_tr, 0.0, self.h, self.ell, self.cap)
        return ax, ay

    def refined(self):
        return SelfSimilarMesh(self.h / 2, self.R_tr, self.ell, self.cap, self.n, self.eval_radius)

    def describe(self):
        return {"h": self.h, "R_tr": self.R_tr, "ell": self.ell, "cap": self.cap, "n": self.n,
                "eval_radius": self.eval_radius}


def _assemble(ax, ay):
    """Weighted stiffness and mass matrices on the tensor triangulation."""
    nx, ny = len(ax), len(ay)
    idx = np.arange(nx * ny).reshape(nx, ny)
    a = idx[:-1, :-1].ravel()
    b = idx[1:, :-1].ravel()
    c = idx[:-1, 1:].ravel()
    d = idx[1:, 1:].ravel()
    tris = np.concatenate([np.stack([a, b, d], 1), np.stack([a, d, c], 1)])
    X = np.stack(np.meshgrid(ax, ay, indexing="ij"), -1).reshape(-1, 2)
    P = X[tris]
    e1 = P[:, 1] - P[:, 0]
    e2 = P[:, 2] - P[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * np.abs(det)
    # gradients of barycentric functions
    G = np.empty((len(tris), 3, 2))
    G[:, 1] = np.stack([e2[:, 1], -e2[:, 0]], 1) / det[:, None]
    G[:, 2] = np.stack([-e1[:, 1], e1[:, 0]], 1) / det[:, None]
    G[:, 0] = -G[:, 1] - G[:, 2]
    Q = np.einsum("qk,tkd->tqd", _BARY, P)
    w = np.exp(-np.sum(Q * Q, axis=-1) / 4)
    wint = area * (w @ _WQ)
    Ke = np.einsum("tid,tjd->tij", G, G) * wint[:, None, None]
    Me = np.einsum("tq,qi,qj->tij", w * _WQ[None] * area[:, None], _BARY, _BARY)
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    N = nx * ny
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(N, N))
    M = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(N, N))
    return K, M, X


@dataclass
class EigenPair:
    """Principal pair for one cone parameter; ``values`` live on the half-plane mesh nodes."""

    eta: float
    rho: float
    mesh: SelfSimilarMesh
    ax: np.ndarray = field(repr=False)
    ay: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    residual: float = 0.0
    iterations: int = 0
    rayleigh: float = 0.0

    @property
    def mu(self):
        return 2.0 * self.rho

    def __post_init__(self):
        self._interp = RegularGridInterpolator((self.ax, self.ay), self.values.reshape(len(self.ax), len(self.ay)))

    def evaluate(self, xi, method="linear"):
        """phi at points xi (..., 2), even in the second coordinate.

        ``method="cubic"`` uses a tensor cubic spline, smooth enough for
        finite-difference second derivatives.
        """
        xi = np.asarray(xi, dtype=float)
        r = np.linalg.norm(xi, axis=-1)
        if np.any(r > self.mesh.eval_radius + 1e-12):
            raise ExtrapolationError(f"self-similar point beyond the evaluable radius {self.mesh.eval_radius}",
                                     {"max_radius": float(r.max())})
        pts = np.stack([xi[..., 0], np.abs(xi[..., 1])], -1)
        if method == "cubic":
            if getattr(self, "_cubic", None) is None:
                self._cubic = RegularGridInterpolator(
                    (self.ax, self.ay), self.values.reshape(len(self.ax), len(self.ay)), method="cubic")
            return self._cubic(pts.reshape(-1, 2)).reshape(xi.shape[:-1])
        return self._interp(pts.reshape(-1, 2)).reshape(xi.shape[:-1])

    def summary(self):
        return {"eta": self.eta, "rho": self.rho, "mu": self.mu, "residual": self.residual,
                "iterations": self.iterations, "mesh_h": self.mesh.h,
                "nodes": int(len(self.ax) * len(self.ay))}


def _inverse_iteration(K, M, tol=1e-8, max_iter=500):
    """Smallest generalized eigenpair of K u = rho M u by inverse iteration with shift 0."""
    lu = spla.splu(K.tocsc())
    u = np.ones(K.shape[0])
    rho_old = np.inf
    for it in range(1, max_iter + 1):
        u = lu.solve(M @ u)
        u /= math.sqrt(u @ (M @ u))
        Ku = K @ u
        rho = float(u @ Ku)
        if abs(rho - rho_old) <= tol * abs(rho) * 1e-2:
            if np.linalg.norm(Ku - rho * (M @ u)) <= tol * np.linalg.norm(Ku):
                return u, rho, it
        rho_old = rho
    raise NumericError("inverse iteration stagnated", {"iterations": max_iter, "rho": rho})


def principal_eigenpair(eta, mesh=None, tol=1e-8):
    """Smallest weighted Dirichlet eigenpair off the slit {x_n <= eta, x_{n+1} = 0}."""
    mesh = mesh or SelfSimilarMesh()
    if not -0.3 < eta < 0.3:
        raise DomainRangeError("cone parameter eta must lie in (-0.3, 0.3)")
    ax, ay = mesh.axes(eta)
    K, M, X = _assemble(ax, ay)
    R = mesh.R_tr
    fixed = ((X[:, 1] == 0) & (X[:, 0] <= eta + 1e-14)) | (np.abs(X[:, 0]) >= R - 1e-12) | (X[:, 1] >= R - 1e-12)
    free = np.flatnonzero(~fixed)
    Kf = K[free][:, free]
    Mf = M[free][:, free]
    u, rho, its = _inverse_iteration(Kf, Mf, tol)
    if rho <= 0:
        raise DiscretizationError("computed eigenvalue is not positive", {"rho": rho})
    if u.sum() < 0:
        u = -u
    vals = np.zeros(len(X))
    vals[free] = u
    if vals.min() < -1e-10 * vals.max():
        raise EigenSignError("principal eigenfunction changes sign", {"min": float(vals.min())})
    vals = np.clip(vals, 0, None)
    # even extension doubles the half-plane integrals
    vals /= math.sqrt(2 * vals @ (M @ vals))
    uf = vals[free]
    rq = float(uf @ (Kf @ uf)) / float(uf @ (Mf @ uf))
    res = float(np.linalg.norm(Kf @ uf - rq * (Mf @ uf)) / np.linalg.norm(Kf @ uf))
    return EigenPair(float(eta), rq, mesh, ax, ay, vals, res, its, rq)


def dense_eigenpair(eta, mesh):
    """Same discrete problem through a dense symmetric-definite solver (coarse meshes only)."""
    from scipy.linalg import eigh
    ax, ay = mesh.axes(eta)
    if len(ax) * len(ay) > 6000:
        raise ConfigError("mesh too large for the dense cross-check")
    K, M, X = _assemble(ax, ay)
    R = mesh.R_tr
    fixed = ((X[:, 1] == 0) & (X[:, 0] <= eta + 1e-14)) | (np.abs(X[:, 0]) >= R - 1e-12) | (X[:, 1] >= R - 1e-12)
    free = np.flatnonzero(~fixed)
    ev = eigh(K[free][:, free].toarray(), M[free][:, free].toarray(), eigvals_only=True, subset_by_index=[0, 1])
    return float(ev[0]), float(ev[1])


def richardson(values, ratio=2.0, order=1.0):
    """Extrapolate the last two entries of a refinement sequence with the given order."""
    coarse, fine = values[-2], values[-1]
    f = ratio ** order
    return (f * fine - coarse) / (f - 1)


def observed_order(values, ratio=2.0):
    a, b, c = values[-3:]
    if (b - c) == 0 or (a - b) / (b - c) <= 0:
        return float("nan")
    return math.log((a - b) / (b - c)) / math.log(ratio)


def continuity_bound(eta1, eta2):
    """Upper bound for rho(eta2)/rho(eta1) from deforming the smaller-slit eigenfunction."""
    return (1 - 3 / math.pi * (math.atan(eta2) - math.atan(eta1))) ** -2


@dataclass
class KappaCurve:
    rows: list
    monotone: bool
    bounds: list

    def table(self):
        return [{"eta": p.eta, "rho": p.rho, "mu": p.mu, "residual": p.residual} for p in self.rows]


def kappa_curve(etas, mesh=None, slack=0.02):
    """rho(eta) along a sorted list, with monotonicity and the continuity bound per adjacent pair."""
    etas = list(etas)
    if etas != sorted(etas):
        raise ConfigError("eta list must be sorted")
    pairs = [principal_eigenpair(e, mesh) for e in etas]
    bounds = []
    mono = True
    for p, q in zip(pairs, pairs[1:]):
        ratio = q.rho / p.rho
        bnd = continuity_bound(p.eta, q.eta)
        bounds.append({"eta1": p.eta, "eta2": q.eta, "ratio": ratio, "bound": bnd,
                       "holds": bool(ratio <= bnd + slack)})
        if q.rho <= p.rho:
            mono = False
    if not mono:
        raise DiscretizationError("rho(eta) is not increasing on this mesh",
                                  {"rho": [p.rho for p in pairs]})
    return KappaCurve(pairs, mono, bounds)


def eta_for_exponent(mu_target, mesh=None, bracket=(-0.25, 0.25), tol=1e-3, max_iter=60):
    """eta with mu(eta) = mu_target by safeguarded regula falsi on the increasing map."""
    lo, hi = bracket
    plo = principal_eigenpair(lo, mesh)
    phi = principal_eigenpair(hi, mesh)
    flo, fhi = plo.mu - mu_target, phi.mu - mu_target
    if flo > 0 or fhi < 0:
        raise DomainRangeError(f"target mu={mu_target} outside [{plo.mu:.4f}, {phi.mu:.4f}]")
    side = 0
    for _ in range(max_iter):
        x = (lo * fhi - hi * flo) / (fhi - flo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        p = principal_eigenpair(x, mesh)
        fx = p.mu - mu_target
        if abs(fx) <= tol:
            return x, p
        if fx < 0:
            lo, flo = x, fx
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = x, fx
            if side == 1:
                flo *= 0.5
            side = 1
    raise NumericError("eta search did not converge", {"bracket": [lo, hi]})


# ---------------------------------------------------------------------------
# caloric cone solutions


def cone_value(pair, X, t, method="linear"):
    """|t|^(mu/2) phi(x/|t|^(1/2)) for t < 0 (unnormalized)."""
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t >= 0):
        raise ExtrapolationError("cone solutions are evaluated at negative times only")
    s = np.sqrt(-t)
    return s ** pair.mu * pair.evaluate(X / s[..., None], method)


def _q1_normalizer(pair, cells=24):
    """sup of the unnormalized cone solution over the evaluable part of Q_1."""
    xs = np.linspace(-1, 1, 2 * cells + 1)
    ts = -np.linspace(1, 0, cells + 1)[:-1]
    X = np.stack(np.meshgrid(xs, xs, indexing="ij"), -1).reshape(-1, 2)
    best = 0.0
    for t in ts:
        ok = np.linalg.norm(X, axis=1) <= pair.mesh.eval_radius * math.sqrt(-t)
        if ok.any():
            best = max(best, float(cone_value(pair, X[ok], np.full(ok.sum(), t)).max()))
    return best


def homogeneous_field(pair, grid, normalize=True):
    """Cone solution on the grid levels where every node is evaluable; sup 1 over those nodes in Q_1.

    The returned Field carries ``stats`` with the discrete heat residual on
    interior nodes at least two cells from the cone.
    """
    if grid.dim != 2:
        raise ConfigError("homogeneous_field expects a planar slit grid")
    rmax = float(np.max(np.linalg.norm(grid.X, axis=-1)))
    ts = grid.times
    keep = np.flatnonzero((ts < 0) & (rmax <= pair.mesh.eval_radius * np.sqrt(np.abs(ts))))
    if len(keep) == 0:
        raise ExtrapolationError("no grid level is fully evaluable", {"max_radius": rmax})
    vals = np.empty((len(keep),) + grid.shape)
    classes = np.empty((len(keep),) + grid.shape, dtype=np.int8)
    for j, k in enumerate(keep):
        vals[j] = cone_value(pair, grid.X, np.full(grid.shape, ts[k]))
        classes[j] = grid.level(k).cls
    inq1 = np.all(np.abs(grid.X) <= 1 + 1e-12, axis=-1)
    scale = float(vals[:, inq1].max()) if normalize else 1.0
    if scale <= 0:
        raise EigenSignError("cone solution vanishes on the evaluable part of Q_1")
    out = Field(grid, vals / scale, classes, keep)
    out.scale = scale
    out.stats = _heat_residual(out, pair)
    return out


def _heat_residual(F, pair):
    grid = F.grid
    h = grid.h
    if len(F.levels) < 2:
        return {"max": float("nan"), "median": float("nan"), "nodes": 0}
    u = F.values
    lap = np.zeros_like(u[1:, 1:-1, 1:-1])
    for a in range(2):
        sl = [slice(1, None), slice(1, -1), slice(1, -1)]
        up, dn = list(sl), list(sl)
        up[a + 1] = slice(2, None)
        dn[a + 1] = slice(0, -2)
        lap += (u[tuple(up)] - 2 * u[1:, 1:-1, 1:-1] + u[tuple(dn)]) / h ** 2
    dt = np.diff(F.times)[:, None, None]
    res = (u[1:, 1:-1, 1:-1] - u[:-1, 1:-1, 1:-1]) / dt - lap
    X = grid.X[1:-1, 1:-1]
    t = F.times[1:]
    s = np.sqrt(-t)[:, None, None]
    # distance to the cone {x_n <= eta |t|^(1/2), x_{n+1} = 0}, kept above two cells
    dx = np.clip(X[None, ..., 0] - pair.eta * s, 0, None)
    dist = np.hypot(dx, X[None, ..., 1])
    ok = (dist >= 2 * h) & (F.cls[1:, 1:-1, 1:-1] != EXTERIOR)
    r = np.abs(res[ok])
    return {"max": float(r.max()) if r.size else float("nan"),
            "median": float(np.median(r)) if r.size else float("nan"), "nodes": int(r.size)}


@dataclass
class Comparability:
    C_fit: float
    hopf_c_plus: float
    hopf_c_minus: float
    samples: int
    excluded: int

    @property
    def hopf_c_fit(self):
        return min(self.hopf_c_plus, self.hopf_c_minus)

    def summary(self):
        return {"C_fit": self.C_fit, "hopf_c_plus": self.hopf_c_plus, "hopf_c_minus": self.hopf_c_minus,
                "hopf_c_fit": self.hopf_c_fit, "samples": self.samples, "excluded": self.excluded}


def comparability_samples(count=4096, seed=0):
    """Scrambled Sobol points in Q_1 = [-1,1]^2 x (-1, 0)."""
    pts = qmc.Sobol(3, scramble=True, seed=seed).random(count)
    return 2 * pts[:, :2] - 1, -pts[:, 2]


def cone_comparability(pair_plus, pair_minus, samples=None):
    """Smallest C with phi_+ <= C phi_- on Q_1 off the cones, and Hopf-type slopes phi/|x_{n+1}| on Q_{1/2}.

    Both cone solutions are normalized to sup 1 over the evaluable part of Q_1.
    Samples outside the evaluable region of either pair are excluded and counted.
    """
    X, t = samples if samples is not None else comparability_samples()
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    rad = min(pair_plus.mesh.eval_radius, pair_minus.mesh.eval_radius)
    ok = (t < 0) & (np.linalg.norm(X, axis=1) <= rad * np.sqrt(np.abs(t))) & (X[:, 1] != 0)
    X, t = X[ok], t[ok]
    up = cone_value(pair_plus, X, t) / _q1_normalizer(pair_plus)
    um = cone_value(pair_minus, X, t) / _q1_normalizer(pair_minus)
    if np.any(um <= 0):
        i = int(np.argmin(um))
        raise EigenSignError("phi_- is not positive off its cone", {"point": X[i].tolist(), "t": float(t[i])})
    C = float(np.max(up / um))
    half = np.all(np.abs(X) <= 0.5, axis=1) & (t >= -0.25)
    ay = np.abs(X[half, 1])
    cp = float(np.min(up[half] / ay)) if half.any() else float("nan")
    cm = float(np.min(um[half] / ay)) if half.any() else float("nan")
    return Comparability(C, cp, cm, int(len(t)), int((~ok).sum()))


def phi0(X):
    """Re sqrt(x_n + i x_{n+1}), the half-homogeneous caloric function vanishing on {x_n <= 0, x_{n+1} = 0}."""
    X = np.asarray(X, dtype=float)
    return np.sqrt(0.5 * (np.hypot(X[..., 0], X[..., 1]) + X[..., 0]))
