"""Dini moduli, the two-step sequence lemma, Hopf iteration constants, and a solver-backed Hopf run.

Sequences are evaluated in exact rational arithmetic: float inputs convert to
fractions without rounding, so the recurrences carry no round-off.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import ConfigError, HypothesisViolation, ResolutionError
from .geometry import GraphFunction, LipschitzDomain
from .grid import classify_grid
from .solver import OperatorCoefficients, RightHandSide, solve_parabolic


U_MAX = 650.0  # e^-U_MAX is about 1e-282, safely representable


def _frac(x):
    return x if isinstance(x, Fraction) else Fraction(x)


class DiniModulus:
    """Nondecreasing modulus omega with a finite Dini integral near 0."""

    def __init__(self, omega, r0=1.0, label="custom", parent=None, scale=1.0):
        self.omega = omega
        self.r0 = float(r0)
        self.label = label
        # a rescaled modulus integrates through its parent to avoid underflow in r0*r
        self.parent = parent
        self.scale = scale
        rs = np.geomspace(1e-12, self.r0, 2001)
        vals = np.broadcast_to(np.asarray(omega(rs), dtype=float), rs.shape)
        if np.any(vals < 0) or np.any(np.diff(vals) < -1e-15 * (1 + np.abs(vals[1:]))):
            raise ConfigError(f"modulus {label} is not nonnegative and nondecreasing")
        self.integral, self.decay = self._dini(self.r0)

    def _dini(self, r0):
        if self.parent is not None:
            return self.parent._dini(self.scale * r0)
        return self._dini_direct(r0)

    def __call__(self, r):
        out = np.asarray(self.omega(np.asarray(r, dtype=float)), dtype=float)
        return float(out) if out.ndim == 0 else out

    def _dini_direct(self, r0):
        """int_0^r0 omega(r) dr/r and the fitted decay exponent of its dyadic shells.

        Two routes over r in [e^-U, r0]: dyadic shells integrated in r, and one
        quadrature of omega(e^-u) in u = ln(1/r). Shell k carries about u_k^s;
        s > -1.5 marks a non-Dini modulus (the 1/log case has s = -1). The part
        below e^-U, out of floating range, is extrapolated from that power law.
        """
        om = self.omega
        u0 = -np.log(r0)
        U = max(u0 + 64 * np.log(2.0), U_MAX)
        k = int((U - u0) / np.log(2.0))
        edges = r0 * 2.0 ** (-np.arange(k + 1))
        parts = np.array([quad(lambda r: float(om(r)) / r, lo, hi, epsabs=1e-16, epsrel=1e-12)[0]
                          for lo, hi in zip(edges[1:], edges[:-1])])
        shell_total = float(parts.sum())
        uk = u0 + np.log(2.0) * (np.arange(k) + 0.5)
        half = slice(k // 2, None)
        keep = parts[half] > 0
        slope = -np.inf
        if keep.sum() >= 8:
            slope = float(np.polyfit(np.log(uk[half][keep]), np.log(parts[half][keep]), 1)[0])
        if slope > -1.5:
            return float("inf"), slope
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            val, _ = quad(lambda u: float(om(np.exp(-u))), u0, u0 + k * np.log(2.0), limit=1000)
        if abs(val - shell_total) > 1e-8 * max(shell_total, 1e-300) + 1e-300:
            raise ResolutionError("Dini integral routes disagree", {"log": val, "shells": shell_total})
        tail = 0.0
        if np.isfinite(slope) and parts[-1] > 0:
            ue = u0 + k * np.log(2.0)
            tail = parts[-1] / np.log(2.0) * ue / (-slope - 1)
        return float(val + tail), slope

    @property
    def converged(self):
        return bool(np.isfinite(self.integral))

    def dini_integral(self, r0=None):
        return self._dini(self.r0 if r0 is None else r0)[0]

    def smallness_radius(self, c0, max_level=200):
        """Largest dyadic r0 <= self.r0 with omega(r0) <= c0 and Dini integral up to r0 <= c0."""
        for j in range(max_level):
            r = self.r0 * 2.0 ** (-j)
            if self(r) <= c0 and self._dini(r)[0] <= c0:
                return r
        raise HypothesisViolation(f"no dyadic radius above 2^-{max_level} meets the smallness c0={c0}")

    def rescaled(self, r0):
        """The modulus seen after blowing Q_r0 up to Q_1: r -> omega(r0 r)."""
        om = self.omega
        return DiniModulus(lambda r: om(r0 * r), 1.0, f"{self.label}@{r0:g}", self, r0)

    def describe(self):
        return {"label": self.label, "r0": self.r0, "dini_integral": self.integral,
                "converged": bool(self.converged)}

    @classmethod
    def power(cls, c, beta, r0=1.0):
        return cls(lambda r: c * r ** beta, r0, f"{c:g}*r^{beta:g}")

    @classmethod
    def log_squared(cls, c, r0=1.0):
        """c / log(e/r)^2; Dini since int_0^r0 dr/(r log^2(e/r)) = 1/log(e/r0)."""
        return cls(lambda r: c / np.log(np.e / np.maximum(r, 1e-300)) ** 2, r0,
                   f"{c:g}/log^2(e/r)")

    @classmethod
    def zero(cls):
        return cls(lambda r: 0.0 * r, 1.0, "zero")


@dataclass
class SequenceCheck:
    hypothesis: bool
    conclusion: bool
    min_a: Fraction
    threshold: Fraction
    terms: int
    a: list = field(repr=False, default_factory=list)

    @property
    def holds(self):
        """Lemma verdict; None when the hypothesis fails and nothing is asserted."""
        return self.conclusion if self.hypothesis else None


def sequence_check(a1, a2, w, C, terms=200):
    """Run a_{k+2} = a_{k+1} - C w_k a_k exactly and test a_k > a_2/6 for k >= 2.

    ``w`` is a sequence (w_1, w_2, ...) or a callable k -> w_k. The hypothesis is
    sum w_k <= (2 + a_1/a_2)^-1 / (2C) over the terms used.
    """
    a1, a2, C = _frac(a1), _frac(a2), _frac(C)
    if a1 <= 0 or a2 <= 0 or C <= 0:
        raise ConfigError("a1, a2 and C must be positive")
    ws = [_frac(w(k)) for k in range(1, terms - 1)] if callable(w) else [_frac(v) for v in w]
    ws = ws[:max(0, terms - 2)]
    if any(v < 0 for v in ws):
        raise ConfigError("w_k must be nonnegative")
    hyp = sum(ws, Fraction(0)) <= Fraction(1) / (2 * C) / (2 + a1 / a2)
    a = [a1, a2]
    for k, wk in enumerate(ws):
        a.append(a[k + 1] - C * wk * a[k])
    tail = a[1:]
    thr = a2 / 6
    return SequenceCheck(bool(hyp), all(v > thr for v in tail), min(tail), thr, len(a), a)


@dataclass
class HopfConstants:
    a: list
    b: list
    C: Fraction
    c1: Fraction
    regime: dict
    claim_a: bool
    claim_b: bool
    falsified: bool

    @property
    def floor(self):
        """Guaranteed linear rate c1/24 once both claims hold."""
        return self.c1 / 24

    def rows(self):
        return [(k + 1, float(ak), float(bk)) for k, (ak, bk) in enumerate(zip(self.a, self.b))]


def hopf_constants(omega, C=1.0, c1=1.0, k_max=60, c0=Fraction(1, 96)):
    """Iterate a_{k+1} = a_k - 2^k C b_k, b_{k+1} = 2^-k omega(2^-k) a_k from a_1 = c1, b_1 = c1 omega(1).

    The claims a_k >= c1/12 and b_k <= 2^(-k-2) a_k (k >= 2) are evaluated
    exactly. ``regime`` records whether the smallness hypotheses hold; a claim
    failing inside the regime is flagged as a falsification.
    """
    C, c1, c0 = _frac(C), _frac(c1), _frac(c0)
    if c0 > Fraction(1, 96):
        raise ConfigError("c0 may only be lowered below 1/96")
    om = [_frac(omega(2.0 ** (-k))) for k in range(k_max + 1)]
    dini = omega.dini_integral(1.0) if isinstance(omega, DiniModulus) else None
    # sum_k 2 omega(2^-k) must stay below (2 + a1/a2)^-1/(2C) with a1/a2 <= 2
    w_sum = 2 * sum(om[1:], Fraction(0))
    regime = {"omega_1": float(om[0]), "dini_integral": dini,
              "omega_small": om[0] <= c0, "dini_small": dini is None or dini <= float(c0),
              "lemma_hypothesis": w_sum <= Fraction(1, 8) / C}
    a = [c1]
    b = [c1 * om[0]]
    for k in range(1, k_max):
        a.append(a[k - 1] - 2 ** k * C * b[k - 1])
        b.append(Fraction(1, 2 ** k) * om[k] * a[k - 1])
    claim_a = all(ak >= c1 / 12 for ak in a[1:])
    claim_b = all(b[k - 1] <= Fraction(1, 2 ** (k + 2)) * a[k - 1] for k in range(2, k_max + 1))
    inside = all(bool(v) for v in regime.values() if isinstance(v, bool))
    return HopfConstants(a, b, C, c1, regime, claim_a, claim_b,
                         inside and not (claim_a and claim_b))


# ---------------------------------------------------------------------------
# solver-backed experiment


@dataclass
class HopfRun:
    c_fit: float
    radii: list
    ratios: list
    normalizer: float
    rhs_scale: float
    budget: float
    h: float

    def summary(self):
        return {"c_fit": self.c_fit, "radii": self.radii, "u_over_r": self.ratios,
                "normalizer": self.normalizer, "rhs_scale": self.rhs_scale,
                "budget": self.budget, "h": self.h}


def dini_domain(omega, n=1, R=1.0):
    """Epigraph of s omega(s), s = |x'| + |t|^(1/2); the interior Dini condition holds with equality."""
    return LipschitzDomain(GraphFunction.dini(omega, n=n, R=R), R)


def hopf_experiment(domain, h, coeffs=None, alpha=0.2, budget=0.0, c0=1 / 96,
                    radii=(0.5, 0.25, 0.125, 0.0625), c_cfl=1.0):
    """Fit min_r u(r e_n, 0)/r for a positive solution normalized at (e_n/2, -1/2).

    The forcing is g = -s d^(alpha-1), the adverse sign, with s chosen so that
    ||d^(1-alpha) g||_inf = budget * c0 * u(e_n/2, -1/2); by linearity this is
    u = u0 + s u1 with u0 the unforced solution and u1 the response to -d^(alpha-1).
    """
    if not 0 <= budget <= 1:
        raise ConfigError("budget is a fraction of c0 and must lie in [0, 1]")
    n = domain.n
    coeffs = coeffs or OperatorCoefficients.heat(n)
    grid = classify_grid(domain, h, c_cfl)
    P = np.zeros(n)
    P[-1] = 0.5
    kP = grid.level_index(-0.5)
    k0 = grid.level_index(0.0)
    store = sorted({kP, k0})
    height = domain.height

    def data(X, t):
        return np.clip(height(X, t), 0, None)

    def solve(rhs, dat):
        return solve_parabolic(grid, coeffs, rhs, data=dat, lateral=0.0,
                               store_from=grid.times[kP] - 1e-12)

    def value(F, x, k):
        j = int(np.flatnonzero(F.levels == k)[0])
        return float(F.values[(j,) + grid.node_index(x)])

    u0 = solve(None, data)
    v0 = value(u0, P, kP)
    if v0 <= 0:
        raise HypothesisViolation("normalization value u(e_n/2, -1/2) is not positive")
    s = 0.0
    u1 = None
    if budget > 0:
        f1 = RightHandSide(lambda X, t: -np.maximum(height(X, t), h) ** (alpha - 1))
        u1 = solve(f1, 0.0)
        v1 = value(u1, P, kP)
        s = budget * c0 * v0 / (1 - budget * c0 * v1)
    norm = v0 + (s * value(u1, P, kP) if u1 is not None else 0.0)
    if norm <= 0:
        raise HypothesisViolation("normalization value u(e_n/2, -1/2) is not positive")
    ratios, used = [], []
    for r in radii:
        if r < 4 * h - 1e-12:
            continue
        x = np.zeros(n)
        x[-1] = r
        val = value(u0, x, k0) + (s * value(u1, x, k0) if u1 is not None else 0.0)
        used.append(float(r))
        ratios.append(val / norm / r)
    if not ratios:
        raise ConfigError("no radius is resolved by the grid (need r >= 4h)")
    return HopfRun(float(min(ratios)), used, ratios, norm, s, budget * c0, h)
