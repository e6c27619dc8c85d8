"""Monotone implicit finite differences for u_t - tr(A D^2 u) = f on cut-cell grids.

Each implicit Euler step assembles an M-matrix: Shortley-Weller arms at cut
nodes, the nonnegative 9-point stencil for cross derivatives, and known values
(boundary data, cut-point values, exterior extension) moved to the right side.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, NumericError
from .grid import CUT, EXTERIOR, INTERIOR, LATERAL, PARABOLIC, SNAP, Field, cylinder_mask


@dataclass(frozen=True)
class OperatorCoefficients:
    """Symmetric coefficient field x -> A(x) with lam I <= A <= Lam I."""

    func: object
    lam: float
    Lam: float
    label: str = "custom"

    def __call__(self, X):
        return np.asarray(self.func(np.asarray(X, dtype=float)), dtype=float)

    @classmethod
    def constant(cls, matrix, lam=None, Lam=None, label="constant"):
        M = np.atleast_2d(np.asarray(matrix, dtype=float))
        if not np.allclose(M, M.T):
            raise ConfigError("coefficient matrix must be symmetric")
        ev = np.linalg.eigvalsh(M)
        lam = float(ev.min()) if lam is None else lam
        Lam = float(ev.max()) if Lam is None else Lam
        return cls(lambda X: np.broadcast_to(M, X.shape[:-1] + M.shape), lam, Lam, label)

    @classmethod
    def heat(cls, dim):
        return cls.constant(np.eye(dim), 1.0, 1.0, label="heat")

    def check(self, X):
        """Spot-check ellipticity at the given nodes; returns the coefficient array."""
        A = self(X)
        ev = np.linalg.eigvalsh(A.reshape(-1, A.shape[-1], A.shape[-1]))
        if ev.min() < self.lam - 1e-12 or ev.max() > self.Lam + 1e-12:
            raise ConfigError(f"coefficient eigenvalues [{ev.min():.4g}, {ev.max():.4g}] "
                              f"outside [{self.lam}, {self.Lam}]")
        return A


@dataclass(frozen=True)
class RightHandSide:
    """Forcing f(x, t), optionally with its (g, h) split and declared budget."""

    func: object = None
    split: object = None
    budget: float = None

    def __call__(self, X, t):
        if self.func is None:
            return np.zeros(np.shape(X)[:-1])
        return np.broadcast_to(np.asarray(self.func(X, t), dtype=float), np.shape(X)[:-1])

    @classmethod
    def zero(cls):
        return cls()


def _as_data(value):
    if callable(value):
        return value
    c = float(value)
    return lambda X, t: np.full(np.shape(X)[:-1], c)


@dataclass
class SolveStats:
    steps: int = 0
    factorizations: int = 0
    iterative_solves: int = 0
    max_residual: float = 0.0
    cut_nodes_max: int = 0
    snapped: int = 0
    extras: dict = field(default_factory=dict)


class _StepAssembler:
    def __init__(self, grid, A, lateral, data, tol):
        self.grid = grid
        self.A = A
        self.lateral = lateral
        self.data = data
        self.tol = tol
        self.d = grid.dim
        self.N = int(np.prod(grid.shape))
        self.Xf = grid.X.reshape(-1, self.d)
        self.Af = A.reshape(self.N, self.d, self.d)
        self._check_cross()

    def _check_cross(self):
        Af = self.Af
        for a in range(self.d):
            for b in range(a + 1, self.d):
                bad = np.abs(Af[:, a, b]) > np.minimum(Af[:, a, a], Af[:, b, b]) + 1e-14
                if np.any(bad):
                    i = int(np.argmax(bad))
                    raise ConfigError(
                        f"cross coefficient a_{a}{b} too large for a nonnegative stencil at node "
                        f"{np.unravel_index(i, self.grid.shape)} (x={self.Xf[i].tolist()})")

    def known_values(self, info, t):
        """Values at every non-unknown node of a level."""
        vals = np.zeros(self.N)
        cls = info.cls.reshape(-1)
        par = cls == PARABOLIC
        if np.any(par):
            vals[par] = self.data(self.Xf[par], t)
        oth = (cls == LATERAL) | (cls == EXTERIOR)
        if np.any(oth):
            vals[oth] = self.lateral(self.Xf[oth], t)
        return vals

    def build(self, info, tau):
        """Matrix and right-side coupling recipe for one level structure."""
        h = self.grid.h
        d = self.d
        cls = info.cls.reshape(-1)
        p = np.flatnonzero((cls == INTERIOR) | (cls == CUT))
        m = len(p)
        num = np.full(self.N, -1)
        num[p] = np.arange(m)
        Ap = self.Af[p]
        diag = np.full(m, 1.0 / tau)
        rows, cols, vals = [], [], []
        krow, kidx, kw = [], [], []
        crow, cpts, cw = [], [], []
        theta = info.theta.reshape(2 * d, -1)[:, p]
        h2 = h * h

        def couple(q, w):
            inner = num[q] >= 0
            rows.append(np.flatnonzero(inner))
            cols.append(num[q[inner]])
            vals.append(-w[inner])
            out = np.flatnonzero(~inner & (w != 0))
            krow.append(out)
            kidx.append(q[out])
            kw.append(w[out])

        for a in range(d):
            tm, tp = theta[2 * a], theta[2 * a + 1]
            aa = Ap[:, a, a]
            red = np.zeros(m)
            for b in range(d):
                if b != a:
                    red += np.abs(Ap[:, a, b]) / (2 * h2)
            coef = {-1: 2.0 / (h2 * tm * (tm + tp)), 1: 2.0 / (h2 * tp * (tm + tp))}
            for s, th in ((-1, tm), (1, tp)):
                wsw = aa * coef[s]
                diag += wsw
                cutarm = th < 1.0
                if np.any(cutarm):
                    xc = self.Xf[p[cutarm]].copy()
                    xc[:, a] += s * th[cutarm] * h
                    crow.append(np.flatnonzero(cutarm))
                    cpts.append(xc)
                    cw.append(wsw[cutarm])
                w = np.where(cutarm, 0.0, wsw) - red
                if np.any(w < -1e-12 * (np.abs(wsw) + 1.0)):
                    i = int(np.argmax(w < -1e-12 * (np.abs(wsw) + 1.0)))
                    raise ConfigError(f"negative stencil weight at node "
                                      f"{np.unravel_index(p[i], self.grid.shape)}")
                couple(p + s * self.grid.strides[a], w)
        for a in range(d):
            for b in range(a + 1, d):
                ab = Ap[:, a, b]
                if not np.any(ab != 0):
                    continue
                wab = np.abs(ab) / (2 * h2)
                diag -= np.abs(ab) / h2
                sa, sb = self.grid.strides[a], self.grid.strides[b]
                sgn = np.where(ab >= 0, 1, -1)
                for s in (1, -1):
                    couple(p + s * sa + s * sgn * sb, wab)
        r = np.concatenate([np.arange(m)] + rows)
        c = np.concatenate([np.arange(m)] + cols)
        v = np.concatenate([diag] + vals)
        M = sp.csc_matrix((v, (r, c)), shape=(m, m))
        cat = lambda xs, shape: np.concatenate(xs) if xs else np.zeros(shape)
        return _StepOperator(p, M, cat(krow, 0).astype(int), cat(kidx, 0).astype(int), cat(kw, 0),
                             cat(crow, 0).astype(int), cat(cpts, (0, d)), cat(cw, 0))


@dataclass
class _StepOperator:
    p: np.ndarray
    M: object
    krow: np.ndarray
    kidx: np.ndarray
    kw: np.ndarray
    crow: np.ndarray
    cpts: np.ndarray
    cw: np.ndarray

    def extra(self, known, lateral, t):
        out = np.bincount(self.krow, self.kw * known[self.kidx], minlength=len(self.p))
        if len(self.crow):
            out += np.bincount(self.crow, self.cw * lateral(self.cpts, t), minlength=len(self.p))
        return out


def _solve_linear(M, b, x0, method, tol, stats, lu_cache, reuse):
    if method == "direct" or (method == "auto" and (reuse or M.shape[0] <= 40000)):
        if reuse and lu_cache.get("lu") is not None:
            lu = lu_cache["lu"]
        else:
            lu = spla.splu(M)
            lu_cache["lu"] = lu
            stats.factorizations += 1
        x = lu.solve(b)
    else:
        stats.iterative_solves += 1
        dinv = 1.0 / M.diagonal()
        P = spla.LinearOperator(M.shape, matvec=lambda v: dinv * v)
        sym = abs(M - M.T).max() <= 1e-14 * abs(M).max()
        solver = spla.cg if sym else spla.bicgstab
        x, info = solver(M, b, x0=x0, rtol=tol * 0.1, atol=0.0, maxiter=2000, M=P)
        if info != 0:
            x = spla.spsolve(M, b)
    res = np.linalg.norm(M @ x - b) / max(np.linalg.norm(b), 1e-300)
    if not np.isfinite(res) or res > tol:
        raise NumericError("linear solve stagnated", {"residual": float(res), "size": M.shape[0]})
    stats.max_residual = max(stats.max_residual, float(res))
    return x


def solve_parabolic(grid, coeffs, rhs=None, data=0.0, lateral=0.0, store_from=None,
                    monitor=None, method="auto", tol=1e-10, stats=None):
    """Implicit Euler march over all grid levels.

    ``data(X, t)`` gives the initial level and the values on the box faces;
    ``lateral`` (constant or callable) gives the values on the lateral boundary,
    at cut points, and the extension at exterior nodes. ``monitor(k, t, u, cls)``
    is called on every level; levels with t >= store_from are kept in the Field.
    """
    rhs = rhs or RightHandSide.zero()
    data = _as_data(data)
    lateral = _as_data(lateral)
    A = coeffs.check(grid.X)
    stats = stats if stats is not None else SolveStats()
    if method == "auto" and grid.dim == 1 and grid.domain.kind in ("one-sided", "box"):
        return _march_1d(grid, A[:, 0, 0], rhs, data, lateral, store_from, monitor, tol, stats)
    method = "auto" if method == "generic" else method
    asm = _StepAssembler(grid, A, lateral, data, tol)
    t0 = grid.times[0]
    store_from = t0 if store_from is None else store_from
    keep = np.flatnonzero(grid.times >= store_from - 1e-12)
    vals = np.empty((len(keep),) + grid.shape)
    classes = np.empty((len(keep),) + grid.shape, dtype=np.int8)
    slot = {int(k): j for j, k in enumerate(keep)}

    info = grid.level(0)
    u = asm.known_values(info, t0)
    clsf = info.cls.reshape(-1)
    inner = (clsf == INTERIOR) | (clsf == CUT)
    u[inner] = data(asm.Xf[inner], t0)

    def record(k, info, u):
        if monitor is not None:
            monitor(k, grid.times[k], u.reshape(grid.shape), info.cls)
        if k in slot:
            vals[slot[k]] = u.reshape(grid.shape)
            classes[slot[k]] = info.cls

    record(0, info, u)
    prev_info, op, lu_cache = None, None, {}
    for k in range(1, len(grid.times)):
        t = grid.times[k]
        tau_k = t - grid.times[k - 1]
        info = grid.level(k)
        reuse = (op is not None and info.same_structure(prev_info)
                 and abs(tau_k - lu_cache.get("tau", -1.0)) <= 1e-14 * tau_k)
        if not reuse:
            op = asm.build(info, tau_k)
            lu_cache = {"tau": tau_k}
        known = asm.known_values(info, t)
        p = op.p
        b = u[p] / tau_k + rhs(asm.Xf[p], t) + op.extra(known, lateral, t)
        x = _solve_linear(op.M, b, u[p], method, tol, stats, lu_cache, reuse) if len(p) else np.zeros(0)
        u = known
        u[p] = x
        stats.steps += 1
        stats.cut_nodes_max = max(stats.cut_nodes_max, int(np.sum(info.cls == CUT)))
        stats.snapped += info.snapped
        record(k, info, u)
        prev_info = info
    out = Field(grid, vals, classes, keep)
    out.stats = stats
    return out


def _march_1d(grid, a, rhs, data, lateral, store_from, monitor, tol, stats):
    """Tridiagonal implicit Euler for one spatial dimension.

    The domain above the graph is a contiguous index range, so each level needs
    only the first unknown index and its lower arm fraction.
    """
    x = grid.axes[0]
    N = len(x)
    h = grid.h
    X = x[:, None]
    times = grid.times
    t0 = times[0]
    onesided = grid.domain.kind == "one-sided"
    store_from = t0 if store_from is None else store_from
    keep = np.flatnonzero(times >= store_from - 1e-12)
    vals = np.empty((len(keep), N))
    classes = np.empty((len(keep), N), dtype=np.int8)
    slot = {int(k): j for j, k in enumerate(keep)}
    if onesided:
        gam = grid.domain.graph(np.zeros((len(times), 0)), times)
    else:
        gam = np.full(len(times), -np.inf)

    def layout(k):
        ht = x - gam[k]
        cls = np.full(N, INTERIOR, dtype=np.int8)
        cls[ht < 0] = EXTERIOR
        cls[(ht >= 0) & (ht < SNAP * h)] = LATERAL
        inside = ht >= SNAP * h
        cls[0] = PARABOLIC if inside[0] else cls[0]
        cls[-1] = PARABOLIC if inside[-1] else cls[-1]
        j0 = max(1, int(np.argmax(inside))) if inside.any() else N
        theta = 1.0
        if j0 < N - 1 and ht[j0 - 1] < 0:
            theta = min(1.0, ht[j0] / h)
            if theta < 1.0:
                cls[j0] = CUT
        return cls, j0, theta, ht

    def known(cls, t):
        u = np.zeros(N)
        par = cls == PARABOLIC
        if par.any():
            u[par] = data(X[par], t)
        oth = (cls == LATERAL) | (cls == EXTERIOR)
        if oth.any():
            u[oth] = lateral(X[oth], t)
        return u

    def record(k, cls, u):
        if monitor is not None:
            monitor(k, times[k], u, cls)
        if k in slot:
            vals[slot[k]] = u
            classes[slot[k]] = cls

    cls, j0, theta, _ = layout(0)
    u = known(cls, t0)
    inner = (cls == INTERIOR) | (cls == CUT)
    u[inner] = data(X[inner], t0)
    record(0, cls, u)
    h2 = h * h
    for k in range(1, len(times)):
        t = times[k]
        tau = t - times[k - 1]
        cls, j0, theta, ht = layout(k)
        unew = known(cls, t)
        if j0 < N - 1:
            idx = np.arange(j0, N - 1)
            m = len(idx)
            ai = a[idx]
            tm = np.ones(m)
            tm[0] = theta
            cm = 2.0 / (h2 * tm * (tm + 1.0))
            cp = 2.0 / (h2 * (tm + 1.0))
            diag = 1.0 / tau + ai * (cm + cp)
            lower = -ai * cm
            upper = -ai * cp
            b = u[idx] / tau + rhs(X[idx], t)
            if theta < 1.0:
                xc = np.array([[x[j0] - theta * h]])
                b[0] += ai[0] * cm[0] * float(lateral(xc, t)[0])
            else:
                b[0] += ai[0] * cm[0] * unew[j0 - 1]
            b[-1] += ai[-1] * cp[-1] * unew[N - 1]
            ab = np.zeros((3, m))
            ab[0, 1:] = upper[:-1]
            ab[1] = diag
            ab[2, :-1] = lower[1:]
            sol = sla.solve_banded((1, 1), ab, b, check_finite=False)
            Mx = diag * sol
            Mx[1:] += lower[1:] * sol[:-1]
            Mx[:-1] += upper[:-1] * sol[1:]
            res = np.linalg.norm(Mx - b) / max(np.linalg.norm(b), 1e-300)
            if not np.isfinite(res) or res > tol:
                raise NumericError("tridiagonal solve failed", {"residual": float(res), "level": k})
            stats.max_residual = max(stats.max_residual, float(res))
            unew[idx] = sol
            stats.cut_nodes_max = max(stats.cut_nodes_max, int(theta < 1.0))
        u = unew
        stats.steps += 1
        stats.factorizations += 1
        record(k, cls, u)
    out = Field(grid, vals.reshape((len(keep),) + grid.shape), classes.reshape((len(keep),) + grid.shape), keep)
    out.stats = stats
    return out


# ---------------------------------------------------------------------------
# Pucci operators and classical-estimate diagnostics


def pucci_eval(eigs, lam, Lam, sign):
    """M^- = lam sum e+ - Lam sum e-, M^+ = Lam sum e+ - lam sum e- (last axis summed)."""
    e = np.asarray(eigs, dtype=float)
    pos = np.sum(np.clip(e, 0, None), axis=-1)
    neg = np.sum(np.clip(-e, 0, None), axis=-1)
    if sign in ("-", -1, "minus"):
        out = lam * pos - Lam * neg
    elif sign in ("+", 1, "plus"):
        out = Lam * pos - lam * neg
    else:
        raise ValueError("sign must be '+' or '-'")
    return float(out) if np.ndim(out) == 0 else out


def interior_harnack_ratio(field_, r, center=None, t_center=0.0):
    """sup over Q_{r/2}(x0, t0 - r^2/2) divided by inf over Q_{r/2}(x0, t0)."""
    upper = cylinder_mask(field_, r / 2, center, t_center - r * r / 2)
    lower = cylinder_mask(field_, r / 2, center, t_center)
    if not upper.any() or not lower.any():
        raise ValueError("cylinders contain no stored nodes")
    sup = float(field_.values[upper].max())
    inf = float(field_.values[lower].min())
    if inf < 1e-14:
        return float("inf")
    return sup / inf


@dataclass(frozen=True)
class ABPRecord:
    lhs: float
    boundary_sup: float
    rhs_norm: float
    scale: float
    fitted_C: float


def abp_check(field_, rhs, r, center=None, t_center=0.0):
    """Both sides of sup u <= sup_{parabolic boundary} u+ + C r^{d/(d+1)} ||f||_{L^{d+1}}."""
    grid = field_.grid
    d = grid.dim
    mask = cylinder_mask(field_, r, center, t_center)
    if not mask.any():
        raise ValueError("cylinder contains no stored nodes")
    lhs = float(field_.values[mask].max())
    bnd = np.zeros_like(mask)
    for a in range(d):
        for s in (-1, 1):
            nb = np.zeros_like(mask)
            src = [slice(None)] * (d + 1)
            dst = [slice(None)] * (d + 1)
            if s > 0:
                dst[a + 1], src[a + 1] = slice(0, -1), slice(1, None)
            else:
                dst[a + 1], src[a + 1] = slice(1, None), slice(0, -1)
            nb[tuple(dst)] = mask[tuple(src)]
            bnd |= mask & ~nb
    levels = np.flatnonzero(mask.reshape(len(field_.times), -1).any(axis=1))
    bnd[levels[0]] |= mask[levels[0]]
    bnd |= mask & ((field_.cls == LATERAL) | (field_.cls == PARABOLIC))
    bsup = float(np.clip(field_.values[bnd], 0, None).max()) if bnd.any() else 0.0
    inner = mask & ~bnd
    p = d + 1
    fv = np.zeros(int(inner.sum()))
    if inner.any():
        X = np.broadcast_to(grid.X, mask.shape + (d,))[inner]
        T = np.broadcast_to(field_.times.reshape((-1,) + (1,) * d), mask.shape)[inner]
        fv = rhs(X, T)
    norm = float((np.sum(np.abs(fv) ** p) * grid.h ** d * grid.tau) ** (1 / p))
    scale = r ** (d / (d + 1))
    C = max(lhs - bsup, 0.0) / (scale * norm) if norm > 0 else float("nan")
    return ABPRecord(lhs, bsup, norm, scale, C)


# ---------------------------------------------------------------------------
# snapshots


def write_field_snapshot(field_, path, levels=None):
    """CSV rows i,j,k,level,value over domain nodes plus a JSON sidecar of metadata."""
    grid = field_.grid
    js = range(len(field_.levels)) if levels is None else levels
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "k", "level", "value"])
        for j in js:
            idx = np.argwhere(field_.cls[j] != EXTERIOR)
            for ind in idx:
                ijk = list(ind) + [0] * (3 - len(ind))
                w.writerow(ijk + [int(field_.levels[j]), repr(float(field_.values[(j,) + tuple(ind)]))])
    meta = grid.describe()
    classes, counts = np.unique(field_.cls, return_counts=True)
    meta["classification"] = {int(c): int(n) for c, n in zip(classes, counts)}
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
