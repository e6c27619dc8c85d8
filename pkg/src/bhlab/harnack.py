"""Special solutions, doubling ratios, parabolic Hoelder seminorms, expansions and quotient experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, ConstructionError, DomainRangeError, HypothesisViolation
from .barriers import fit_power
from .geometry import LipschitzDomain, SlitDomain
from .grid import CUT, INTERIOR, Field, SpaceTimeGrid, cylinder_mask
from .rhs_spaces import lq_norm_on_domain
from .solver import OperatorCoefficients, RightHandSide, solve_parabolic

# ---------------------------------------------------------------------------
# special solutions


def _height(domain, X, t):
    """Boundary distance proxy: x_n - Gamma (one-sided) or |(x_n - Gamma, x_{n+1})| on slit domains."""
    if isinstance(domain, SlitDomain):
        return np.hypot(np.clip(domain.tip_height(X, t), 0, None), X[..., -1])
    return domain.height(X, t)


def _half_power(domain, X, t):
    """Re sqrt((x_n - Gamma) + i x_{n+1}), the square-root profile relative to the slit edge."""
    a = domain.tip_height(X, t)
    b = X[..., -1]
    return np.sqrt(0.5 * (np.hypot(a, b) + a))


@dataclass
class SpecialSolution:
    """Positive solution vanishing on the lateral boundary, normalized to sup 1 on Q_1."""

    phi: Field
    domain: object
    eps: float
    R: float
    R_requested: float
    scale: float
    sandwich: dict = field(default_factory=dict)

    @property
    def field(self):
        return self.phi

    def summary(self):
        return {"eps": self.eps, "R": self.R, "R_requested": self.R_requested,
                "normalizer": self.scale, "sandwich": self.sandwich}


def special_solution(domain, eps, coeffs=None, h=1 / 32, c_cfl=1.0, R_cap=2.0, slack_C=1.0,
                     delta1=None, method="auto"):
    """Solve with data (2R)^eps d on the parabolic boundary and zero on the lateral one, then normalize.

    One-sided domains use d = x_n - Gamma and check 1/24 d^(1+eps) <= phi <=
    64 d^(1-eps) on every level with additive slack slack_C h^(1/2). Slit domains
    use the square-root profile relative to the slit edge as d and record the
    bracket of phi / profile.
    """
    if not 0 < eps < 1:
        raise ConfigError("eps must lie in (0, 1)")
    slit = isinstance(domain, SlitDomain)
    if not slit and not isinstance(domain, LipschitzDomain):
        raise ConfigError("special solutions need a one-sided or slit domain")
    if delta1 is not None and domain.L > delta1:
        raise ConfigError(f"Lipschitz constant {domain.L} exceeds delta1 = {delta1}")
    R_req = 2.0 ** (1 / eps)
    R = min(R_req, R_cap)
    big = type(domain)(domain.graph, R)
    grid = SpaceTimeGrid(big, h, c_cfl)
    coeffs = coeffs or OperatorCoefficients.heat(grid.dim)
    prof = (lambda X, t: _half_power(big, X, t)) if slit else (lambda X, t: np.clip(big.height(X, t), 0, None))
    amp = (2 * R) ** eps

    def data(X, t):
        return amp * prof(X, t)

    # powers of the profile matching d^(1 +- eps), or |.|^(1/2 +- eps) on slit domains
    base_p = 0.5 if slit else 1.0
    lo_p, hi_p = (base_p + eps) / base_p, (base_p - eps) / base_p
    track = {"lo": np.inf, "hi": 0.0, "lo_at": None, "hi_at": None}

    def monitor(k, t, u, cls):
        inner = (cls == INTERIOR) | (cls == CUT)
        b = prof(grid.X, t)[inner]
        ok = b > 0
        if not ok.any():
            return
        v, b, pts = u[inner][ok], b[ok], grid.X[inner][ok]
        r_lo, r_hi = v / b ** lo_p, v / b ** hi_p
        i, j = int(np.argmin(r_lo)), int(np.argmax(r_hi))
        if r_lo[i] < track["lo"]:
            track["lo"], track["lo_at"] = float(r_lo[i]), (float(t), pts[i].tolist())
        if r_hi[j] > track["hi"]:
            track["hi"], track["hi_at"] = float(r_hi[j]), (float(t), pts[j].tolist())

    k1 = grid.level_index(-1.0) if R > 1 else 0
    F = solve_parabolic(grid, coeffs, data=data, lateral=0.0, store_from=grid.times[k1],
                        monitor=monitor, method=method)
    q1 = cylinder_mask(F, 1.0)
    scale = float(np.max(F.values[q1]))
    if scale <= 0:
        raise ConstructionError("special solution vanishes on Q_1")
    phi = F.with_values(F.values / scale)
    phi.stats = F.stats
    slack = slack_C * math.sqrt(h)
    stats = {"ratio_lo": track["lo"] / scale, "ratio_hi": track["hi"] / scale,
             "lo_at": track["lo_at"], "hi_at": track["hi_at"], "slack": slack,
             "min_value": float(np.min(phi.values[phi.domain_mask()]))}
    if not slit:
        worst_lo, worst_hi = _sandwich_gaps(phi, big, eps)
        stats.update(worst_lo)
        stats.update(worst_hi)
        stats["R_cap_applied"] = R < R_req
        if stats["gap_lo"] > slack or stats["gap_hi"] > slack:
            bad = stats["gap_lo_at"] if stats["gap_lo"] > slack else stats["gap_hi_at"]
            raise ConstructionError("special solution leaves the sandwich 1/24 d^(1+eps) <= phi <= 64 d^(1-eps)",
                                    {"worst": bad, "gap_lo": stats["gap_lo"], "gap_hi": stats["gap_hi"],
                                     "slack": slack})
    else:
        stats["profile_bracket"] = _profile_bracket(phi, big)
    if stats["min_value"] < -1e-12:
        raise ConstructionError("special solution takes negative values", {"min": stats["min_value"]})
    return SpecialSolution(phi, big, eps, R, R_req, scale, stats)


def _profile_bracket(phi, domain):
    """[min, max] of phi over the square-root profile at stored nodes off the slit."""
    grid = phi.grid
    lo, hi = np.inf, 0.0
    for j, t in enumerate(phi.times):
        inner = (phi.cls[j] == INTERIOR) | (phi.cls[j] == CUT)
        b = _half_power(domain, grid.X, t)[inner]
        ok = b > 0
        if ok.any():
            r = phi.values[j][inner][ok] / b[ok]
            lo, hi = min(lo, float(r.min())), max(hi, float(r.max()))
    return [lo, hi]


def _sandwich_gaps(phi, domain, eps):
    """Largest additive violations of 1/24 d^(1+eps) <= phi <= 64 d^(1-eps) over stored domain nodes."""
    grid = phi.grid
    lo_gap, hi_gap = -np.inf, -np.inf
    lo_at = hi_at = None
    for j, t in enumerate(phi.times):
        cls = phi.cls[j]
        inner = (cls == INTERIOR) | (cls == CUT)
        d = np.clip(domain.height(grid.X, t), 0, None)[inner]
        v = phi.values[j][inner]
        g1 = d ** (1 + eps) / 24 - v
        g2 = v - 64 * d ** (1 - eps)
        i, k = int(np.argmax(g1)), int(np.argmax(g2))
        if g1[i] > lo_gap:
            lo_gap, lo_at = float(g1[i]), (float(t), grid.X[inner][i].tolist())
        if g2[k] > hi_gap:
            hi_gap, hi_at = float(g2[k]), (float(t), grid.X[inner][k].tolist())
    return ({"gap_lo": lo_gap, "gap_lo_at": lo_at}, {"gap_hi": hi_gap, "gap_hi_at": hi_at})


def _as_field(phi):
    return phi.phi if isinstance(phi, SpecialSolution) else phi


def sup_on_cylinder(field_, r):
    mask = cylinder_mask(field_, r)
    if not mask.any():
        raise DomainRangeError(f"no stored nodes in Q_{r}")
    return float(np.max(field_.values[mask]))


def doubling_ratio(phi, r1, r2):
    """sup_{Q_r1} phi / sup_{Q_r2} phi."""
    F = _as_field(phi)
    if not 0 < r1 <= r2 <= 1:
        raise ConfigError("need 0 < r1 <= r2 <= 1")
    if r1 < 4 * F.grid.h - 1e-12:
        raise ConfigError(f"r1 = {r1} is below 4h = {4 * F.grid.h}")
    if r1 == r2:
        return 1.0
    a, b = sup_on_cylinder(F, r1), sup_on_cylinder(F, r2)
    if b < 1e-14:
        raise ConstructionError("degenerate sup on the outer cylinder", {"sup": b})
    return a / b


@dataclass
class DoublingTable:
    rows: list
    exponent: float
    violations: int

    def to_dict(self):
        return {"exponent": self.exponent, "violations": self.violations, "rows": self.rows}


def doubling_table(phi, radii, exponent):
    """All ordered pairs r1 < r2 from radii, compared with (r1/r2)^exponent / 8."""
    rows, bad = [], 0
    rs = sorted(radii)
    for i, r1 in enumerate(rs):
        for r2 in rs[i + 1:]:
            ratio = doubling_ratio(phi, r1, r2)
            bound = (r1 / r2) ** exponent / 8
            ok = ratio >= bound
            bad += not ok
            rows.append({"r1": r1, "r2": r2, "ratio": ratio, "bound": bound, "ok": bool(ok)})
    return DoublingTable(rows, exponent, bad)


# ---------------------------------------------------------------------------
# Hoelder seminorm


@dataclass
class HolderEstimate:
    value: float
    pairs: int
    by_scale: dict

    def __float__(self):
        return self.value


def holder_estimate(field_, gamma, region=None, pair_budget=64, seed=0, values=None):
    """Max of |g(p) - g(q)| / (|x - y| + |t - s|^(1/2))^gamma over sampled node pairs.

    Pairs: every adjacent pair along each spatial axis and between consecutive
    stored levels, plus pair_budget pairs per dyadic parabolic-distance scale
    from a scrambled Halton sequence (prefix-stable, so a larger budget samples
    a superset of pairs).
    """
    if not 0 < gamma <= 1:
        raise ConfigError("gamma must lie in (0, 1]")
    grid = field_.grid
    g = field_.values if values is None else np.asarray(values, dtype=float)
    mask = field_.domain_mask() if region is None else np.asarray(region, dtype=bool)
    if not mask.any():
        raise ConfigError("empty region")
    h = grid.h
    best = 0.0
    count = 0
    by_scale = {}
    # adjacent spatial pairs
    for a in range(grid.dim):
        lo = [slice(None)] * (grid.dim + 1)
        hi = [slice(None)] * (grid.dim + 1)
        lo[a + 1], hi[a + 1] = slice(0, -1), slice(1, None)
        both = mask[tuple(lo)] & mask[tuple(hi)]
        if both.any():
            diff = np.abs(g[tuple(hi)] - g[tuple(lo)])[both]
            best = max(best, float(diff.max()) / h ** gamma)
            count += int(both.sum())
    # adjacent levels
    if len(field_.times) > 1:
        both = mask[1:] & mask[:-1]
        if both.any():
            dt = np.abs(np.diff(field_.times)).reshape((-1,) + (1,) * grid.dim)
            ratio = np.abs(g[1:] - g[:-1]) / np.sqrt(np.broadcast_to(dt, both.shape)) ** gamma
            best = max(best, float(ratio[both].max()))
            count += int(both.sum())
    by_scale["adjacent"] = best
    # stratified pairs across dyadic scales
    idx = np.argwhere(mask)
    N = len(idx)
    if N > 1 and pair_budget > 0:
        X = grid.X
        T = field_.times
        shape = np.array((len(T),) + grid.shape)
        span = max(float(np.ptp(X[mask.any(axis=0)].reshape(-1, grid.dim), axis=0).max()),
                   math.sqrt(float(np.ptp(T[mask.reshape(len(T), -1).any(axis=1)]))))
        scales = []
        s = 2 * h
        while s <= 2 * span:
            scales.append(s)
            s *= 2
        gm = np.where(mask, g, np.nan)
        extremes = idx[[int(np.argmax(g[mask])), int(np.argmin(g[mask]))]]
        a, b = (tuple(e) for e in extremes)
        if a != b:
            dist = float(np.linalg.norm(X[a[1:]] - X[b[1:]])) + math.sqrt(abs(T[a[0]] - T[b[0]]))
            best = max(best, abs(g[a] - g[b]) / dist ** gamma)
            count += 1
        for si, s in enumerate(scales):
            # one stream per scale, so a larger budget extends every scale's sample
            eng = qmc.Halton(d=grid.dim + 3, scramble=True, seed=np.random.default_rng([seed, si]))
            u = eng.random(pair_budget)
            # parabolic distance rho in [s, 2s), a share w of it in space and the rest in time
            rho = s * (1 + u[:, 1])
            w = u[:, 2]
            dirs = 2 * u[:, 3:3 + grid.dim] - 1
            dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
            off = np.rint(dirs * (w * rho)[:, None] / h).astype(int)
            dk = np.rint(((1 - w) * rho) ** 2 / grid.tau).astype(int)
            step = np.column_stack([dk, off])
            local = 0.0
            bases = [idx[np.minimum((u[:, 0] * N).astype(int), N - 1)]]
            bases += [np.broadcast_to(e, step.shape) for e in extremes]
            for base in bases:
                for sgn in (1, -1):
                    tgt = base + sgn * step
                    ok = np.all((tgt >= 0) & (tgt < shape), axis=1) & np.any(step != 0, axis=1)
                    if not ok.any():
                        continue
                    p, q = base[ok], tgt[ok]
                    qi = tuple(q.T)
                    inside = mask[qi]
                    if not inside.any():
                        continue
                    p, q = p[inside], q[inside]
                    dx = np.linalg.norm(X[tuple(q[:, 1:].T)] - X[tuple(p[:, 1:].T)], axis=-1)
                    dist = dx + np.sqrt(np.abs(T[q[:, 0]] - T[p[:, 0]]))
                    r = np.abs(gm[tuple(q.T)] - gm[tuple(p.T)]) / dist ** gamma
                    local = max(local, float(r.max()))
                    count += len(r)
            by_scale[float(s)] = local
            best = max(best, local)
    return HolderEstimate(float(best), count, by_scale)


def holder_seminorm(field_, gamma, region=None, pair_budget=64, seed=0, values=None):
    """Sampled parabolic C^{0,gamma} seminorm; see holder_estimate."""
    return holder_estimate(field_, gamma, region, pair_budget, seed, values).value


# ---------------------------------------------------------------------------
# expansions


@dataclass
class ExpansionRecord:
    radii: list
    K: list
    residuals: list
    exponent: float
    constant: float

    @property
    def K_spread(self):
        a = np.abs(np.asarray(self.K))
        return float(a.max() / a.min()) if a.min() > 0 else math.inf

    def to_dict(self):
        return {"radii": self.radii, "K": self.K, "residuals": self.residuals,
                "exponent": self.exponent, "constant": self.constant, "K_spread": self.K_spread}


def expansion_fit(u, phi, radii, floor=1e-13):
    """K_r = sum_{Q_r} u phi / sum_{Q_r} phi^2 and sup_{Q_r} |u - K_r phi| with a log-log decay fit.

    Nodes carry equal cell volume on the uniform lattice, so the weights cancel.
    Residuals below ``floor`` are treated as exact; the exponent is then inf.
    """
    P = _as_field(phi)
    if u.grid is not P.grid and u.values.shape != P.values.shape:
        raise ConfigError("u and phi must live on the same grid")
    if not np.array_equal(u.levels, P.levels):
        raise ConfigError("u and phi must store the same levels")
    radii = sorted(radii, reverse=True)
    Ks, res = [], []
    for r in radii:
        if r < 4 * u.grid.h - 1e-12:
            raise ConfigError(f"radius {r} below 4h")
        m = cylinder_mask(P, r) & cylinder_mask(u, r)
        den = float(np.sum(P.values[m] ** 2))
        if den == 0:
            raise ConstructionError(f"phi vanishes on Q_{r}")
        K = float(np.sum(u.values[m] * P.values[m]) / den)
        Ks.append(K)
        res.append(float(np.max(np.abs(u.values[m] - K * P.values[m]))))
    if all(x <= floor for x in res):
        return ExpansionRecord(radii, Ks, res, math.inf, 0.0)
    fit = fit_power(radii, np.maximum(res, floor))
    return ExpansionRecord(radii, Ks, res, fit.exponent, fit.constant)


# ---------------------------------------------------------------------------
# quotients


@dataclass
class QuotientEstimate:
    gamma: float
    region: dict
    seminorm: float
    sup: float
    inf: float
    pairs: int
    excluded: int = 0
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {"gamma": self.gamma, "region": self.region, "seminorm": self.seminorm,
                "sup": self.sup, "inf": self.inf, "pairs": self.pairs, "excluded": self.excluded,
                **self.extras}


def _node_value(F, x, t):
    return F.at(np.asarray(x, dtype=float), t)


def _hyp_point(domain):
    x = np.zeros(domain.spatial_dim)
    x[domain.n - 1] = 0.5
    return x, -0.75


def check_m(F, m, label="v"):
    """u(e_n/2, -3/4) >= m at the nearest node."""
    x, t = _hyp_point(F.grid.domain)
    val = _node_value(F, x, t)
    if val < m:
        raise HypothesisViolation(f"{label}(e_n/2, -3/4) = {val:.4g} is below m = {m}")
    return val


def _region_nodes(F, r):
    """Domain nodes of Q_r with positive boundary distance."""
    grid = F.grid
    mask = cylinder_mask(F, r)
    for j, t in enumerate(F.times):
        mask[j] &= (F.cls[j] == INTERIOR) | (F.cls[j] == CUT)
    return mask


def quotient_field(u, v, region, floor=None):
    """u/v on region nodes; nodes with v below floor (array or scalar) are dropped."""
    keep = region.copy()
    if np.any(v.values[region] <= 0):
        raise HypothesisViolation("v must be positive in the region (v > 0)")
    if floor is not None:
        keep &= v.values >= floor
    q = np.zeros_like(v.values)
    q[keep] = u.values[keep] / v.values[keep]
    return q, keep, int(region.sum() - keep.sum())


def v_floor(v, m, eps):
    """m d^(1+eps) / 24 with d the boundary distance of each node."""
    grid = v.grid
    out = np.zeros_like(v.values)
    for j, t in enumerate(v.times):
        d = np.clip(_height(grid.domain, grid.X, t), 0, None)
        out[j] = m * d ** (1 + eps) / 24
    return out


def quotient_estimate(u, v, gamma, r=0.5, m=None, eps=0.2, pair_budget=64, seed=0, floor=True):
    region = _region_nodes(v, r)
    fl = v_floor(v, m, eps) if (floor and m is not None) else None
    q, keep, excluded = quotient_field(u, v, region, fl)
    if not keep.any():
        raise HypothesisViolation("no quotient nodes above the v-floor")
    est = holder_estimate(v, gamma, keep, pair_budget, seed, values=q)
    vals = q[keep]
    return QuotientEstimate(gamma, {"r": r, "nodes": int(keep.sum())}, est.value,
                            float(vals.max()), float(vals.min()), est.pairs, excluded)


@dataclass
class HarnackConfig:
    """Inputs of one quotient experiment on Q_1."""

    domain: object
    h: float = 1 / 32
    coeffs: object = None
    f1: object = None
    f2: object = None
    data_u: object = None
    data_v: object = None
    gamma: float = 0.3
    m: float = 0.05
    c0: float = 1.0
    q: float = None
    eps: float = 0.2
    region: float = 0.5
    pair_budget: int = 64
    seed: int = 0
    c_cfl: float = 1.0


def boundary_harnack_experiment(cfg):
    """Solve for u and v, check the hypotheses on v and f2, and estimate the seminorm of u/v."""
    dom = cfg.domain
    grid = SpaceTimeGrid(dom, cfg.h, cfg.c_cfl)
    coeffs = cfg.coeffs or OperatorCoefficients.heat(grid.dim)
    n = dom.n
    q = cfg.q if cfg.q is not None else n + 3
    if cfg.f2 is not None and isinstance(dom, LipschitzDomain):
        nrm = lq_norm_on_domain(lambda X, t: cfg.f2(X, t), dom, q)
        if nrm > cfg.c0 * cfg.m:
            raise HypothesisViolation(f"||f2||_L^{q} = {nrm:.4g} exceeds c0 m = {cfg.c0 * cfg.m:.4g}")
    k_lo = grid.level_index(-1.0)
    store = grid.times[k_lo]
    u = solve_parabolic(grid, coeffs, RightHandSide(cfg.f1) if cfg.f1 else None,
                        data=cfg.data_u, lateral=0.0, store_from=store)
    if cfg.data_v is cfg.data_u and cfg.f2 is cfg.f1:
        v = u
    else:
        v = solve_parabolic(grid, coeffs, RightHandSide(cfg.f2) if cfg.f2 else None,
                            data=cfg.data_v, lateral=0.0, store_from=store)
    mv = check_m(v, cfg.m)
    est = quotient_estimate(u, v, cfg.gamma, cfg.region, cfg.m, cfg.eps, cfg.pair_budget, cfg.seed)
    est.extras["v_at_hypothesis_point"] = mv
    est.extras["h"] = cfg.h
    return est, u, v


@dataclass
class CarlesonRecord:
    min: float
    max: float
    nodes: int

    @property
    def spread(self):
        return self.max / self.min if self.min > 0 else math.inf

    def to_dict(self):
        return {"min": self.min, "max": self.max, "spread": self.spread, "nodes": self.nodes}


def carleson_check(u, v, r=0.5, m_u=None, m_v=None):
    """Extremes of u/v over domain nodes of Q_r strictly inside the domain."""
    if m_u is not None:
        check_m(u, m_u, "u")
    if m_v is not None:
        check_m(v, m_v, "v")
    region = _region_nodes(v, r)
    if np.any(u.values[region] <= 0) or np.any(v.values[region] <= 0):
        raise HypothesisViolation("both functions must be positive in the region")
    qv = u.values[region] / v.values[region]
    return CarlesonRecord(float(qv.min()), float(qv.max()), int(region.sum()))
