"""Uniform space-time lattices with cut-cell node classification, and fields on them."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainRangeError

EXTERIOR, INTERIOR, CUT, LATERAL, PARABOLIC = 0, 1, 2, 3, 4
CLASS_NAMES = {EXTERIOR: "exterior", INTERIOR: "interior", CUT: "cut",
               LATERAL: "lateral-boundary", PARABOLIC: "parabolic-boundary"}
SNAP = 1e-6


@dataclass
class LevelInfo:
    """Classification of one time level.

    ``theta[2a]`` and ``theta[2a+1]`` hold the arm fractions toward the minus and
    plus neighbor along axis a; they are 1 except at cut arms.
    """

    t: float
    cls: np.ndarray
    theta: np.ndarray
    snapped: int

    def same_structure(self, other):
        return (other is not None and np.array_equal(self.cls, other.cls)
                and np.array_equal(self.theta, other.theta))


def _neighbor(mask, axis, sign):
    """out[i] = mask[i + sign e_axis], False past the edge."""
    out = np.zeros_like(mask)
    src = [slice(None)] * mask.ndim
    dst = [slice(None)] * mask.ndim
    if sign > 0:
        dst[axis], src[axis] = slice(0, -1), slice(1, None)
    else:
        dst[axis], src[axis] = slice(1, None), slice(0, -1)
    out[tuple(dst)] = mask[tuple(src)]
    return out


class SpaceTimeGrid:
    """Tensor lattice over a box in space times a uniform time partition.

    The default box is the cylinder Q_R; one-sided domains trim the part of the
    box lying more than two cells below the graph.
    """

    def __init__(self, domain, h, c_cfl=1.0, t_start=None, t_end=0.0, bounds=None, trim=True):
        if not 0 < c_cfl <= 1:
            raise ConfigError("c_cfl must lie in (0, 1]")
        R = domain.R
        if h > R / 8 + 1e-15:
            raise ConfigError(f"grid spacing h={h} must be at most R/8={R / 8}")
        self.domain = domain
        self.h = float(h)
        self.dim = domain.spatial_dim
        if bounds is None:
            bounds = [(-R, R)] * self.dim
        bounds = [list(b) for b in bounds]
        if trim and domain.kind == "one-sided":
            bounds[-1][0] = max(bounds[-1][0], self._trim_level(domain, bounds, t_start, t_end) - 2 * h)
        self.axes = []
        for lo, hi in bounds:
            cells = int(math.ceil((hi - lo) / h - 1e-9))
            lo = hi - cells * h
            self.axes.append(lo + h * np.arange(cells + 1))
        self.shape = tuple(len(a) for a in self.axes)
        t0 = -R * R if t_start is None else float(t_start)
        steps = max(1, int(math.ceil((t_end - t0) / (c_cfl * h * h) - 1e-9)))
        self.n_steps = steps
        self.tau = (t_end - t0) / steps
        self.c_cfl = self.tau / (h * h)
        self.times = t0 + self.tau * np.arange(steps + 1)
        self.times[-1] = t_end
        self.X = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)
        self.strides = [int(np.prod(self.shape[a + 1:])) for a in range(self.dim)]
        face = np.zeros(self.shape, dtype=bool)
        for a in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[a] = 0
            face[tuple(idx)] = True
            idx[a] = -1
            face[tuple(idx)] = True
        self.face = face
        self._cache = {}

    @staticmethod
    def _trim_level(domain, bounds, t_start, t_end):
        R = domain.R
        t0 = -R * R if t_start is None else t_start
        ts = np.linspace(t0, t_end, 257)
        if domain.n > 1:
            xs = [np.linspace(lo, hi, 65) for lo, hi in bounds[:-1]]
            XP = np.stack(np.meshgrid(*xs, indexing="ij"), -1).reshape(-1, domain.n - 1)
            gmin = min(float(np.min(domain.graph(XP, t))) for t in ts)
        else:
            gmin = float(np.min(domain.graph(np.zeros((len(ts), 0)), ts)))
        return gmin

    # -- classification -----------------------------------------------------
    def level(self, k):
        if k in self._cache:
            return self._cache[k]
        info = self.classify_time(self.times[k])
        if len(self._cache) > 4:
            self._cache.clear()
        self._cache[k] = info
        return info

    def classify_time(self, t):
        kind = self.domain.kind
        d, h = self.dim, self.h
        cls = np.full(self.shape, INTERIOR, dtype=np.int8)
        theta = np.ones((2 * d,) + self.shape)
        snapped = 0
        if kind == "box":
            cls[self.face] = PARABOLIC
            return LevelInfo(float(t), cls, theta, 0)
        X = self.X
        if kind == "one-sided":
            ht = self.domain.height(X, t)
            ext = ht < 0
            lat = (ht >= 0) & (ht < SNAP * h)
            snapped += int(np.sum((ht > 0) & (ht < SNAP * h)))
            level_fn = self.domain.height
            cut_axes = range(d)
            barrier = ext
        elif kind == "slit":
            plane = np.abs(X[..., -1]) < 0.5 * h
            ht = self.domain.tip_height(X, t)
            lat = plane & (ht < SNAP * h)
            snapped += int(np.sum(plane & (ht > 0) & (ht < SNAP * h)))
            ext = np.zeros(self.shape, dtype=bool)
            level_fn = self.domain.tip_height
            cut_axes = range(d - 1)
            barrier = lat
        else:
            raise ConfigError(f"unknown domain kind {kind}")
        cls[ext] = EXTERIOR
        cls[lat] = LATERAL
        inside = ~ext & ~lat
        cls[inside & self.face] = PARABOLIC
        free = inside & ~self.face
        for a in cut_axes:
            for j, s in enumerate((-1, 1)):
                cand = free & _neighbor(barrier, a, s)
                if not np.any(cand):
                    continue
                if a == self.domain.n - 1 and s < 0:
                    th = ht[cand] / h
                elif a == self.domain.n - 1:
                    th = np.ones(int(cand.sum()))
                else:
                    th = _crossing(level_fn, X[cand], t, a, s, h)
                theta[2 * a + j][cand] = np.minimum(th, 1.0)
        tiny = np.any(theta < SNAP, axis=0) & free
        if np.any(tiny):
            snapped += int(tiny.sum())
            cls[tiny] = LATERAL
            theta[:, tiny] = 1.0
            free &= ~tiny
        cutmask = free & np.any(theta < 1.0, axis=0)
        cls[cutmask] = CUT
        theta[:, ~free] = 1.0
        return LevelInfo(float(t), cls, theta, snapped)

    def summary(self, levels=None):
        """Class counts summed over the given levels (all by default)."""
        counts = {name: 0 for name in CLASS_NAMES.values()}
        snapped = 0
        ks = range(len(self.times)) if levels is None else levels
        for k in ks:
            info = self.classify_time(self.times[k])
            vals, num = np.unique(info.cls, return_counts=True)
            for v, c in zip(vals, num):
                counts[CLASS_NAMES[int(v)]] += int(c)
            snapped += info.snapped
        counts["snapped"] = snapped
        return counts

    def describe(self):
        return {"h": self.h, "tau": self.tau, "c_cfl": self.c_cfl, "R": self.domain.R,
                "shape": list(self.shape), "levels": len(self.times),
                "t_start": float(self.times[0]), "t_end": float(self.times[-1]),
                "lower": [float(a[0]) for a in self.axes], "upper": [float(a[-1]) for a in self.axes]}

    def node_index(self, x):
        """Index of the lattice node nearest to the spatial point x."""
        x = np.asarray(x, dtype=float)
        idx = []
        for a, ax in enumerate(self.axes):
            i = int(round((x[a] - ax[0]) / self.h))
            if i < 0 or i >= len(ax):
                raise DomainRangeError(f"point {x.tolist()} outside the grid box")
            idx.append(i)
        return tuple(idx)

    def level_index(self, t):
        k = int(round((t - self.times[0]) / self.tau))
        if k < 0 or k >= len(self.times):
            raise DomainRangeError(f"time {t} outside the grid")
        return k


def _crossing(level_fn, Xc, t, axis, sign, h, sub=8, iters=52):
    """Fraction theta in (0,1] of the first zero of level_fn along x + theta*sign*h*e_axis."""
    m = len(Xc)
    e = np.zeros(Xc.shape[1])
    e[axis] = sign * h

    def val(th):
        return level_fn(Xc + th[:, None] * e, t)

    grid = np.linspace(0, 1, sub + 1)
    lo = np.zeros(m)
    hi = np.ones(m)
    found = np.zeros(m, dtype=bool)
    for j in range(1, sub + 1):
        v = val(np.full(m, grid[j]))
        new = (~found) & (v < 0)
        lo[new] = grid[j - 1]
        hi[new] = grid[j]
        found |= new
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = val(mid) >= 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    return 0.5 * (lo + hi)


def classify_grid(domain, h, c_cfl=1.0, **kwargs):
    """Build the lattice for a domain; see SpaceTimeGrid for keyword options."""
    return SpaceTimeGrid(domain, h, c_cfl, **kwargs)


class Field:
    """Node values on a stored subset of the time levels of a grid.

    ``values[j]`` and ``cls[j]`` belong to grid level ``levels[j]``.
    """

    def __init__(self, grid, values, cls, levels):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)
        self.cls = np.asarray(cls, dtype=np.int8)
        self.levels = np.asarray(levels, dtype=int)
        self.times = grid.times[self.levels]
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_function(cls_, grid, func, levels=None):
        """Sample func(X, t) on all domain nodes; classification taken from the grid."""
        levels = np.arange(len(grid.times)) if levels is None else np.asarray(levels)
        vals = np.empty((len(levels),) + grid.shape)
        classes = np.empty((len(levels),) + grid.shape, dtype=np.int8)
        for j, k in enumerate(levels):
            info = grid.level(k)
            classes[j] = info.cls
            vals[j] = func(grid.X, grid.times[k])
        return cls_(grid, vals, classes, levels)

    def domain_mask(self):
        return self.cls != EXTERIOR

    def at(self, x, t):
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 0.5 * self.grid.tau + 1e-12:
            raise DomainRangeError(f"time {t} is not stored in this field")
        return float(self.values[(j,) + self.grid.node_index(x)])

    def with_values(self, values):
        return Field(self.grid, values, self.cls, self.levels)


def cylinder_mask(field, r, center=None, t_center=0.0, tol=1e-9):
    """Nodes of Q_r(center, t_center): ball in x', box in the rest, times in [t-r^2, t]."""
    grid = field.grid
    X = grid.X
    n_lat = grid.domain.n - 1
    c = np.zeros(grid.dim) if center is None else np.asarray(center, dtype=float)
    Y = X - c
    sp = np.ones(grid.shape, dtype=bool)
    if n_lat:
        sp &= np.linalg.norm(Y[..., :n_lat], axis=-1) <= r + tol
    sp &= np.all(np.abs(Y[..., n_lat:]) <= r + tol, axis=-1)
    tm = (field.times >= t_center - r * r - tol) & (field.times <= t_center + tol)
    return tm.reshape((-1,) + (1,) * grid.dim) & sp[None] & field.domain_mask()
