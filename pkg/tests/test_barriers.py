import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import qmc

from bhlab.barriers import (BarrierSpec, barrier_margin, barrier_sandwich, barrier_value, boundary_samples,
                            dyadic_radii, fit_power, flat_margin_oracle, growth_fit, largest_sandwich_radius)
from bhlab.errors import ConfigError, HypothesisViolation
from bhlab.geometry import GraphFunction, LipschitzDomain, SlitDomain
from bhlab.grid import Field, classify_grid
from bhlab.ou_spectral import SelfSimilarMesh, cone_value, phi0, principal_eigenpair
from bhlab.solver import OperatorCoefficients, solve_parabolic

FLAT1 = LipschitzDomain(GraphFunction.flat(1))
FLAT2 = LipschitzDomain(GraphFunction.flat(2))
HEAT2 = OperatorCoefficients.heat(2)


def _samples(count, seed=0):
    u = qmc.Halton(3, seed=seed).random(count)
    return np.column_stack([2 * u[:, 0] - 1, u[:, 1], -u[:, 2]])


def test_one_sided_values():
    sup = BarrierSpec("one-sided-super", 0.1, 1.0, domain=FLAT2)
    assert barrier_value(sup, [0, 0.5, 0]) == pytest.approx(0.5 ** 0.9)
    assert barrier_value(sup, [0, 0.5, 0]) == pytest.approx(0.5359, abs=1e-4)
    sub = BarrierSpec("one-sided-sub", 0.1, 1.0, domain=FLAT2)
    assert barrier_value(sub, [0, 1, 0]) == pytest.approx(1.0)


def test_slit_super_value_matches_formula():
    pair = principal_eigenpair(0.1, SelfSimilarMesh(1 / 16))
    spec = BarrierSpec("slit-super", 0.1, 2.0, pair=pair)
    P = np.array([[0.5, 0.0, -0.25], [0.3, 0.0, -0.5]])
    phi = cone_value(pair, P[:, :2], P[:, 2], "cubic") / spec.cone_scale()
    want = 2.0 * phi + P[:, 0] ** 2 - 2 * P[:, 2]
    assert np.allclose(barrier_value(spec, P), want)
    assert np.all(phi > 0)


def test_bad_parameters():
    with pytest.raises(ConfigError):
        BarrierSpec("one-sided-super", 1.2, 1.0, domain=FLAT2)
    with pytest.raises(ConfigError):
        BarrierSpec("two-sided", 0.2, 1.0, domain=FLAT2)


def test_flat_margin_matches_closed_form():
    P = _samples(500)
    for kind, upper in (("one-sided-super", True), ("one-sided-sub", False)):
        spec = BarrierSpec(kind, 0.2, 40.0, 0.01, domain=FLAT2)
        rec = barrier_margin(spec, HEAT2, P, 1e-3)
        assert rec.passed and rec.min_margin >= 0
        oracle = flat_margin_oracle(0.2, 40.0, 0.01, 2, rec.points[:, 1], upper)
        # central differences at d >= 4 h_fd: relative truncation about (h_fd/d)^2
        assert np.allclose(rec.margins, oracle, rtol=0.02)
        far = rec.points[:, 1] > 0.1
        assert np.allclose(rec.margins[far], oracle[far], rtol=1e-4)


def test_quadratic_part_exact():
    spec = BarrierSpec("one-sided-super", 0.2, 0.0, 0.0, domain=FLAT2)
    rec = barrier_margin(spec, HEAT2, _samples(50), 1e-2)
    assert np.allclose(rec.margins, -3.0, atol=1e-6)


def test_small_lipschitz_sawtooth_satisfies_margin():
    dom = LipschitzDomain(GraphFunction.sawtooth(0.005, 2))
    rec = barrier_margin(BarrierSpec("one-sided-super", 0.2, 40.0, 0.01, domain=dom), HEAT2, _samples(40), 1e-2)
    assert rec.passed


def test_large_lipschitz_sawtooth_violates_margin():
    dom = LipschitzDomain(GraphFunction.sawtooth(0.3, 2))
    rec = barrier_margin(BarrierSpec("one-sided-super", 0.2, 40.0, 1e-4, domain=dom), HEAT2, _samples(40), 1e-2)
    assert not rec.passed and rec.violations


def test_margin_skips_points_near_boundary():
    P = np.array([[0.0, 0.01, -0.5], [0.0, 0.5, -0.5]])
    rec = barrier_margin(BarrierSpec("one-sided-super", 0.2, 40.0, domain=FLAT2), HEAT2, P, 1e-2)
    assert rec.skipped == 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([0.0, 0.02, 0.05]))
def test_super_barrier_boundary_values(seed, L):
    """Nonnegative on the lateral boundary, at least one on the bottom and side."""
    dom = LipschitzDomain(GraphFunction.sawtooth(L, 2) if L else GraphFunction.flat(2))
    spec = BarrierSpec("one-sided-super", 0.2, 1.0, distance="height", domain=dom)
    pts = boundary_samples(dom, 64, seed)
    assert np.all(barrier_value(spec, pts["lateral"]) >= -1e-6)
    assert np.all(barrier_value(spec, pts["bottom"]) >= 1)
    assert np.all(barrier_value(spec, pts["side"]) >= 1)


def _unit_data_solution(h):
    grid = classify_grid(FLAT1, h)
    return solve_parabolic(grid, OperatorCoefficients.heat(1), data=1.0, lateral=0.0)


def test_sandwich_with_solved_field():
    F = _unit_data_solution(1 / 32)
    upper = BarrierSpec("one-sided-super", 0.2, 8.0, domain=FLAT1)
    rec = barrier_sandwich(F, upper, None, 1.0, slack=1 / 32)
    assert rec.holds
    lower = BarrierSpec("one-sided-sub", 0.2, 0.5, domain=FLAT1)
    r0 = largest_sandwich_radius(F, None, lower, dyadic_radii(1, 4), slack=1 / 32)
    assert r0 is not None


def test_growth_exponent_linear():
    grid = classify_grid(FLAT1, 1 / 128, t_start=-1 / 1024)
    F = Field.from_function(grid, lambda X, t: np.clip(X[..., 0], 0, None), levels=[len(grid.times) - 1])
    fit = growth_fit(F, dyadic_radii(2, 4))
    assert fit.exponent == pytest.approx(1.0, abs=0.01)
    half = growth_fit(F, [r / 2 for r in dyadic_radii(2, 4)])
    assert abs(fit.exponent - half.exponent) <= 0.05


def test_growth_exponent_slit_root():
    grid = classify_grid(SlitDomain(GraphFunction.flat(1)), 1 / 64, t_start=-1 / 16)
    F = Field.from_function(grid, lambda X, t: phi0(X), levels=[len(grid.times) - 1])
    assert growth_fit(F, dyadic_radii(2, 4)).exponent == pytest.approx(0.5, abs=0.01)


def test_growth_exponent_solved_sawtooth():
    dom = LipschitzDomain(GraphFunction.sawtooth(0.05, 1))
    grid = classify_grid(dom, 1 / 64)
    F = solve_parabolic(grid, OperatorCoefficients.heat(1), data=lambda X, t: np.clip(X[..., 0], 0, None) + 0.5,
                        lateral=0.0, store_from=0.0)
    fit = growth_fit(F, dyadic_radii(2, 4))
    assert 0.85 <= fit.exponent <= 1.15


def test_lower_fit_requires_positive_values():
    with pytest.raises(HypothesisViolation):
        fit_power([0.5, 0.25], [1.0, -1.0])
    with pytest.raises(ConfigError):
        fit_power([0.25, 0.5], [1.0, 1.0])
