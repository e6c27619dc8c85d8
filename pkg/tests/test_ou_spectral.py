import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bhlab.errors import ConfigError, DomainRangeError, ExtrapolationError
from bhlab.geometry import GraphFunction, SlitDomain
from bhlab.grid import LATERAL, classify_grid
from bhlab.ou_spectral import (SelfSimilarMesh, comparability_samples, cone_comparability, cone_value,
                               continuity_bound, dense_eigenpair, eta_for_exponent, homogeneous_field, kappa_curve,
                               observed_order, phi0, principal_eigenpair, richardson)

COARSE = SelfSimilarMesh(1 / 16)
MID = SelfSimilarMesh(1 / 32)


def _nodes(pair):
    return np.stack(np.meshgrid(pair.ax, pair.ay, indexing="ij"), -1).reshape(-1, 2)


def test_sparse_matches_dense():
    mesh = SelfSimilarMesh(1 / 8)
    for eta in (-0.2, 0.0, 0.15):
        lam0, lam1 = dense_eigenpair(eta, mesh)
        assert principal_eigenpair(eta, mesh).rho == pytest.approx(lam0, rel=1e-9)
        assert lam1 > lam0 + 0.1


def test_dense_refuses_large_mesh():
    with pytest.raises(ConfigError):
        dense_eigenpair(0.0, SelfSimilarMesh(1 / 256))


def test_eta_out_of_range():
    with pytest.raises(DomainRangeError):
        principal_eigenpair(0.3, COARSE)


def test_eta_zero_is_the_root_function():
    pair = principal_eigenpair(0.0, MID)
    assert pair.rho == pytest.approx(0.25, abs=0.01)
    X = _nodes(pair)
    r = np.linalg.norm(X, axis=1)
    keep = (r > 0.5) & (r < 2) & (X[:, 1] > 0.1)
    q = pair.values[keep] / phi0(X[keep])
    assert q.min() / q.max() > 0.97


def test_first_eigenvalue_converges_to_a_quarter():
    meshes = [SelfSimilarMesh(1 / 16), SelfSimilarMesh(1 / 32), SelfSimilarMesh(1 / 64)]
    rhos = [principal_eigenpair(0.0, m).rho for m in meshes]
    assert rhos[0] > rhos[1] > rhos[2] > 0.25
    p = observed_order(rhos)
    assert 2 * richardson(rhos, order=p) == pytest.approx(0.5, abs=0.01)


def test_rayleigh_quotient_by_cell_quadrature():
    # weighted energy over weighted mass with gradients from cell differences
    pair = principal_eigenpair(0.1, MID)
    V = pair.values.reshape(len(pair.ax), len(pair.ay))
    ax, ay = pair.ax, pair.ay
    dx, dy = np.diff(ax)[:, None], np.diff(ay)[None, :]
    gx = 0.5 * (np.diff(V, axis=0)[:, 1:] + np.diff(V, axis=0)[:, :-1]) / dx
    gy = 0.5 * (np.diff(V, axis=1)[1:] + np.diff(V, axis=1)[:-1]) / dy
    cx, cy = 0.5 * (ax[1:] + ax[:-1])[:, None], 0.5 * (ay[1:] + ay[:-1])[None, :]
    w = np.exp(-(cx ** 2 + cy ** 2) / 4) * dx * dy
    mid = 0.25 * (V[1:, 1:] + V[:-1, 1:] + V[1:, :-1] + V[:-1, :-1])
    rq = np.sum((gx ** 2 + gy ** 2) * w) / np.sum(mid ** 2 * w)
    assert rq == pytest.approx(pair.rho, rel=0.03)
    assert pair.rayleigh == pair.rho and pair.residual < 1e-6


def test_rho_increases_with_eta():
    assert principal_eigenpair(0.2, MID).rho > principal_eigenpair(0.0, MID).rho


def test_positive_away_from_the_slit():
    pair = principal_eigenpair(0.0, MID)
    g = np.linspace(-2, 2, 41)
    P = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    P = P[(np.abs(P[:, 1]) >= 0.5) & (np.linalg.norm(P, axis=1) <= 2)]
    assert pair.evaluate(P).min() > 0.01


def test_zero_on_slit_nodes():
    for eta in (-0.2, 0.1):
        pair = principal_eigenpair(eta, COARSE)
        X = _nodes(pair)
        assert np.all(pair.values[(X[:, 1] == 0) & (X[:, 0] <= eta)] == 0)


def test_evaluation_beyond_radius():
    pair = principal_eigenpair(0.0, COARSE)
    with pytest.raises(ExtrapolationError):
        pair.evaluate([7.0, 0.0])


def test_kappa_curve_and_continuity():
    curve = kappa_curve([-0.25, 0.0, 0.25], MID)
    rhos = [p.rho for p in curve.rows]
    assert curve.monotone and rhos[0] < rhos[1] < rhos[2]
    pair = kappa_curve([0.0, 0.1], MID)
    assert all(b["holds"] for b in pair.bounds)
    with pytest.raises(ConfigError):
        kappa_curve([0.1, 0.0], COARSE)


def test_continuity_bound_values():
    assert continuity_bound(0.0, 0.0) == 1.0
    assert continuity_bound(0.0, 0.1) == pytest.approx((1 - 3 / np.pi * np.arctan(0.1)) ** -2)
    assert continuity_bound(0.0, 0.2) > continuity_bound(0.0, 0.1) > 1


@settings(max_examples=6, deadline=None)
@given(st.floats(-0.25, 0.2), st.floats(0.01, 0.05))
def test_rho_monotone_property(eta, step):
    """rho is increasing in the cone parameter on a fixed mesh."""
    assert principal_eigenpair(eta + step, COARSE).rho > principal_eigenpair(eta, COARSE).rho


def test_eta_for_exponent_signs():
    eta, pair = eta_for_exponent(0.5, MID)
    assert abs(eta) <= 0.03 and pair.mu == pytest.approx(0.5, abs=1e-3)
    up, _ = eta_for_exponent(0.55, MID)
    down, _ = eta_for_exponent(0.45, MID)
    assert down < eta < up
    assert up > 0 and down < 0


def test_eta_for_exponent_outside_bracket():
    with pytest.raises(DomainRangeError):
        eta_for_exponent(0.9, COARSE)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-0.9, -0.05), st.floats(0.5, 1.5))
def test_cone_solution_homogeneity(x1, x2, t, lam):
    """u(lam x, lam^2 t) = lam^mu u(x, t)."""
    pair = principal_eigenpair(0.1, COARSE)
    X = np.array([[x1, x2]])
    T = np.array([t])
    try:
        base = cone_value(pair, X, T)
    except ExtrapolationError:
        return
    scaled = cone_value(pair, lam * X, lam ** 2 * T)
    assert scaled[0] == pytest.approx(lam ** pair.mu * base[0], rel=1e-10, abs=1e-14)


def test_cone_value_rejects_nonnegative_time():
    pair = principal_eigenpair(0.0, COARSE)
    with pytest.raises(ExtrapolationError):
        cone_value(pair, [[0.1, 0.1]], [0.0])


def test_homogeneous_field_flat_cone_is_root():
    pair = principal_eigenpair(0.0, MID)
    grid = classify_grid(SlitDomain(GraphFunction.flat(1)), 1 / 16)
    F = homogeneous_field(pair, grid)
    X = grid.X
    ref = phi0(X)
    inq = np.all(np.abs(X) <= 1, axis=-1)
    for j in range(len(F.levels)):
        t = abs(F.times[j])
        if t < 0.25:
            continue
        scale = F.values[j][inq].max() / ref[inq].max()
        assert np.max(np.abs(F.values[j] - scale * ref)) < 0.05


@pytest.mark.parametrize("eta", [-0.15, 0.15])
def test_homogeneous_field_signs(eta):
    pair = principal_eigenpair(eta, MID)
    grid = classify_grid(SlitDomain(GraphFunction.flat(1)), 1 / 16)
    F = homogeneous_field(pair, grid)
    X = grid.X
    s = np.sqrt(np.abs(F.times))[:, None, None]
    on = (np.abs(X[None, ..., 1]) < 1e-12) & (X[None, ..., 0] <= eta * s - 1e-12)
    off = np.broadcast_to(np.abs(X[..., 1]) >= 1 / 16, F.values.shape)
    assert np.all(F.values[on] == 0)
    assert np.all(F.values[off] > 0)
    assert np.max(F.values[:, np.all(np.abs(X) <= 1, axis=-1)]) == pytest.approx(1.0)
    assert F.stats["nodes"] > 0


def test_homogeneous_field_needs_planar_grid():
    from bhlab.geometry import LipschitzDomain
    pair = principal_eigenpair(0.0, COARSE)
    with pytest.raises(ConfigError):
        homogeneous_field(pair, classify_grid(LipschitzDomain(GraphFunction.flat(1)), 1 / 16))


def test_comparability_of_a_pair_with_itself():
    pair = principal_eigenpair(0.1, COARSE)
    rec = cone_comparability(pair, pair, comparability_samples(512))
    assert rec.C_fit == pytest.approx(1.0, rel=1e-12)
    assert rec.hopf_c_fit > 0 and rec.samples + rec.excluded == 512


def test_comparability_orders_the_cones():
    plus = principal_eigenpair(0.15, COARSE)
    minus = principal_eigenpair(-0.15, COARSE)
    rec = cone_comparability(plus, minus, comparability_samples(1024))
    back = cone_comparability(minus, plus, comparability_samples(1024))
    # the wider cone is the smaller solution near its slit
    assert 0 < rec.C_fit < back.C_fit < np.inf
    assert rec.hopf_c_plus > 0 and rec.hopf_c_minus > 0


def test_sobol_samples_in_unit_cylinder():
    X, t = comparability_samples(256, seed=3)
    assert np.all(np.abs(X) <= 1) and np.all((t <= 0) & (t >= -1))
    X2, t2 = comparability_samples(256, seed=3)
    assert np.array_equal(X, X2) and np.array_equal(t, t2)


def test_slit_grid_lateral_matches_flat_cone():
    grid = classify_grid(SlitDomain(GraphFunction.flat(1)), 1 / 16)
    lat = grid.level(0).cls == LATERAL
    assert np.all(phi0(grid.X[lat]) == 0)
