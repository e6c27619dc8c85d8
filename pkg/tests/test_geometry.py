import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from bhlab.errors import ConfigError, DomainRangeError, NonPositiveDistanceError
from bhlab.geometry import (GraphFunction, LipschitzDomain, SlitCone, cone_membership, distance_derivative_bounds,
                            lipschitz_verify, mollified_graph, read_graph_samples, regularized_distance,
                            scaled_signed_height_check, signed_height, write_graph_samples)

FLAT1 = LipschitzDomain(GraphFunction.flat(1))
FLAT2 = LipschitzDomain(GraphFunction.flat(2))
TILT = LipschitzDomain(GraphFunction.tilted([0.1], 2))
SAW = LipschitzDomain(GraphFunction.sawtooth(0.2, 2))


def test_signed_height_examples():
    assert signed_height(FLAT2, [0, 0.5, 0]) == 0.5
    assert signed_height(FLAT2, [0.3, 0.0, -0.2]) == 0.0
    assert signed_height(TILT, [1, 0.6, -0.2]) == pytest.approx(0.5)


def test_signed_height_outside_cylinder():
    with pytest.raises(DomainRangeError):
        signed_height(FLAT2, [0, 0.5, 0.1])
    with pytest.raises(DomainRangeError):
        signed_height(FLAT2, [0, 1.5, -0.1])


def test_graph_must_vanish_at_origin():
    with pytest.raises(ConfigError):
        GraphFunction(2, lambda xp, t: 0.1 + 0 * t, 0.0)


def test_declared_lipschitz_is_checked():
    with pytest.raises(ConfigError):
        GraphFunction(2, lambda xp, t: 0.5 * xp[..., 0] + 0 * t, 0.1)


def test_flat_distance_is_height():
    P = np.array([[0.2, 0.3, -0.1], [-0.5, 0.05, -0.9], [0.0, 0.9, 0.0]])
    assert np.max(np.abs(regularized_distance(FLAT2, P) - P[:, 1])) <= 1e-10


def test_tilted_distance_bracket():
    d = regularized_distance(TILT, [0, 0.3, -0.1])
    assert 0.15 <= d <= 0.45


def test_sawtooth_distance_matches_dense_scan():
    x = np.array([[0.0, 0.25]])
    t = np.array([-0.05])
    sh = 0.25 - float(SAW.graph(x[:, :1], t)[0])

    def G(rho):
        return 0.25 - float(mollified_graph(SAW.graph, x[:, :1], t, np.array([rho]))[0]) - rho

    rhos = np.linspace(0.01, 1.0, 2001)
    vals = np.array([G(r) for r in rhos])
    flips = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    assert len(flips) == 1
    i = flips[0]
    oracle = brentq(G, rhos[i], rhos[i + 1], xtol=1e-13)
    got = regularized_distance(SAW, [0.0, 0.25, -0.05])
    assert abs(got - oracle) <= 1e-8
    assert 0.5 * sh <= got <= 1.5 * sh


def test_distance_below_graph_rejected():
    with pytest.raises(NonPositiveDistanceError):
        regularized_distance(FLAT2, [0.0, -0.1, -0.1])


def test_derivative_bounds_flat_and_tilted():
    rng = np.random.default_rng(0)
    P = np.column_stack([rng.uniform(-0.5, 0.5, 30), rng.uniform(0.2, 0.8, 30), rng.uniform(-0.8, -0.1, 30)])
    flat = distance_derivative_bounds(FLAT2, P, 0.02)
    assert flat.max_stat <= 1e-6
    assert flat.min_dn == pytest.approx(1.0, abs=1e-6)
    tilt = distance_derivative_bounds(TILT, P, 0.02)
    assert tilt.min_dn >= 2 / 3 - 1e-3


def test_derivative_constant_stable_under_step_halving():
    rng = np.random.default_rng(1)
    P = np.column_stack([rng.uniform(-0.5, 0.5, 40), rng.uniform(0.3, 0.8, 40), rng.uniform(-0.8, -0.1, 40)])
    a = distance_derivative_bounds(SAW, P, 0.02).C2
    b = distance_derivative_bounds(SAW, P, 0.01).C2
    assert np.isfinite(a) and abs(a - b) <= 0.1 * b


def test_close_samples_are_skipped():
    with pytest.warns(UserWarning):
        rec = distance_derivative_bounds(FLAT2, [[0, 0.01, -0.1], [0, 0.5, -0.1]], 0.01)
    assert rec.skipped == 1 and rec.used == 1


def test_cone_membership_examples():
    cone = SlitCone(1, 0.1)
    assert cone_membership(cone, [0, -1, 0, -0.5])
    assert not cone_membership(cone, [0, 1, 0, 0])
    assert not cone_membership(cone, [0, -1, 0.3, -0.5])
    assert cone_membership(cone, [0, -1, 0.01, -0.5], h=1 / 32)


def test_cone_parameter_range():
    with pytest.raises(ConfigError):
        SlitCone(1, 0.4)


def test_scaling_check():
    rng = np.random.default_rng(2)
    P = np.column_stack([rng.uniform(-0.8, 0.8, 200), rng.uniform(0.05, 0.9, 200), rng.uniform(-0.9, -0.01, 200)])
    assert scaled_signed_height_check(FLAT2, 0.5, P[:20]).min_ratio == pytest.approx(1.0, abs=1e-9)
    assert scaled_signed_height_check(TILT, 0.5, P)
    x1 = np.linspace(0.5, 0.8, 10)
    Q = np.column_stack([x1, 0.8 * x1 + 0.02, np.full(10, -0.3)])
    wrong = LipschitzDomain(GraphFunction.tilted([0.8], 2))
    bad = scaled_signed_height_check(FLAT2, 0.5, Q, scaled_domain=wrong)
    assert not bad and len(bad.violations) == 10


def test_graph_sample_roundtrip(tmp_path):
    g = GraphFunction.tilted([0.1], 2)
    axes = [np.linspace(-1, 1, 9), np.linspace(-1, 0, 5)]
    write_graph_samples(tmp_path / "g.csv", g, axes)
    back = read_graph_samples(tmp_path / "g.csv", 0.1)
    xp = np.array([[0.3], [-0.7]])
    t = np.array([-0.4, -0.9])
    assert np.allclose(back(xp, t), g(xp, t), atol=1e-12)


points = st.tuples(st.floats(-0.9, 0.9), st.floats(0.02, 0.95), st.floats(-0.95, 0.0))


@settings(max_examples=40, deadline=None)
@given(points)
def test_distance_sandwich_property(p):
    """Regularized distance stays within half and three halves of the height."""
    for dom in (TILT, SAW):
        sh = signed_height(dom, p)
        if sh <= 1e-3:
            continue
        d = regularized_distance(dom, p)
        assert 0.5 * sh <= d <= 1.5 * sh


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.8, 0.8), st.floats(-0.9, 0.0))
def test_distance_monotone_in_height(x1, t):
    """Distance is nondecreasing along a column."""
    xs = np.linspace(0.3, 0.9, 7)
    P = np.column_stack([np.full(7, x1), xs, np.full(7, t)])
    d = regularized_distance(SAW, P)
    assert np.all(np.diff(d) >= -1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 0.95), st.floats(-0.95, 0.0))
def test_flat_distance_exact_property(xn, t):
    assert abs(regularized_distance(FLAT1, [xn, t]) - xn) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 0)), min_size=2, max_size=30))
def test_lipschitz_verify_never_exceeds_declared(pts):
    for g in (GraphFunction.tilted([0.1], 2), GraphFunction.sawtooth(0.2, 2), GraphFunction.time_root(0.3, 2)):
        assert lipschitz_verify(g, np.array(pts)) <= g.L + 1e-9
