import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bhlab.errors import ConfigError, HypothesisViolation
from bhlab.geometry import GraphFunction, LipschitzDomain
from bhlab.grid import Field, classify_grid
from bhlab.obstacle import (CurvedFront, ObstacleSolution, complementarity_defect, extract_free_boundary,
                            fb_exponent, fb_regularity_pipeline, front_experiment, manufactured_experiment,
                            manufactured_f, manufactured_u, obstacle_grid, solve_obstacle)


def _exact(h, shift=0.0, t_start=-0.5):
    g = obstacle_grid(1, h, t_start=t_start)
    F = Field.from_function(g, lambda X, t: manufactured_u(X, t, shift))
    return ObstacleSolution.from_field(F, lambda X, t: manufactured_f(X, t, shift))


def test_caloric_data_without_forcing():
    g = obstacle_grid(1, 1 / 16, t_start=-0.25)
    data = lambda X, t: 2 + X[..., 0]
    sol = solve_obstacle(g, lambda X, t: 0 * X[..., 0], data)
    assert not sol.contact.any()
    assert np.max(np.abs(sol.u.values - Field.from_function(g, data).values)) < 1e-9
    assert extract_free_boundary(sol).empty


def test_empty_contact_set_gives_empty_graph():
    g = obstacle_grid(2, 1 / 8, t_start=-1 / 16)
    sol = solve_obstacle(g, lambda X, t: 0 * X[..., 0], lambda X, t: 1 + 0.1 * X[..., 0] ** 2 + 0.2 * t)
    fb = extract_free_boundary(sol)
    assert fb.empty and len(fb.t) == 0
    with pytest.raises(HypothesisViolation):
        fb_exponent(fb, [0.5, 0.25])


def test_complementarity_and_sign():
    g = obstacle_grid(1, 1 / 32, t_start=-0.5)
    sol = solve_obstacle(g, manufactured_f, manufactured_u)
    defect, umin = complementarity_defect(sol)
    assert defect <= 1e-9 and umin >= 0
    assert sol.residual <= 1e-9 * (1 + 2.5)


def test_box_grid_required():
    grid = classify_grid(LipschitzDomain(GraphFunction.flat(1)), 1 / 16)
    with pytest.raises(ConfigError):
        solve_obstacle(grid, manufactured_f, manufactured_u)


@settings(max_examples=8, deadline=None)
@given(st.floats(0, 0.5), st.floats(-0.3, 0.3), st.floats(0, 1))
def test_comparison_in_the_data(lift, shift, force):
    """Larger data and forcing give a larger obstacle solution at every node."""
    g = obstacle_grid(1, 1 / 16, t_start=-0.25)
    d1 = lambda X, t: manufactured_u(X, t, shift)
    d2 = lambda X, t: manufactured_u(X, t, shift) + lift * (1 + X[..., 0] ** 2)
    f1 = lambda X, t: manufactured_f(X, t, shift)
    f2 = lambda X, t: manufactured_f(X, t, shift) + force
    u1 = solve_obstacle(g, f1, d1).u.values
    u2 = solve_obstacle(g, f2, d2).u.values
    assert np.all(u1 <= u2 + 1e-10)


def _radial(h):
    g = obstacle_grid(2, h, t_start=-1 / 16)
    data = lambda X, t: 0.5 * np.clip(np.linalg.norm(X, axis=-1) - 0.5, 0, None) ** 2
    return solve_obstacle(g, lambda X, t: -np.ones(X.shape[:-1]), data)


def test_radial_contact_set_shrinks():
    # u_t = Lap u - 1 = (r - 1/2)/r > 0 off the disc, so the contact set only shrinks;
    # the first step also absorbs initial values that are not a discrete solution
    sol = _radial(1 / 32)
    C = sol.contact
    assert all(np.all(C[j + 1] <= C[j]) for j in range(1, len(C) - 1))
    assert C[-1].sum() < C[1].sum()
    assert np.array_equal(C[-1], C[-1].T) and np.array_equal(C[-1], C[-1][::-1])


def test_radial_contact_area_against_fine_grid():
    area = {h: _radial(h).contact[-1].sum() * h * h for h in (1 / 16, 1 / 32, 1 / 64)}
    assert abs(area[1 / 32] - area[1 / 64]) < abs(area[1 / 16] - area[1 / 64])
    assert area[1 / 32] == pytest.approx(area[1 / 64], abs=0.05)


def test_manufactured_free_boundary_within_two_cells():
    for h in (1 / 16, 1 / 32):
        g = obstacle_grid(1, h, t_start=-0.5)
        fb = extract_free_boundary(solve_obstacle(g, manufactured_f, manufactured_u))
        assert not fb.empty and fb.flagged == 0
        assert np.max(np.abs(fb.gamma - fb.t)) <= 2 * h


def test_free_boundary_error_first_order():
    a = manufactured_experiment(1 / 16)
    b = manufactured_experiment(1 / 32)
    assert np.log2(a["fb_error"] / b["fb_error"]) == pytest.approx(1.0, abs=0.25)
    assert a["sup_error_over_h"] <= 3 and b["sup_error_over_h"] <= 3


def test_threshold_sweep_stable():
    g = obstacle_grid(1, 1 / 32, t_start=-0.5)
    sol = solve_obstacle(g, manufactured_f, manufactured_u)
    a = extract_free_boundary(sol, 1e-8)
    b = extract_free_boundary(sol, 5e-9)
    assert np.array_equal(a.t, b.t)
    assert np.max(np.abs(a.gamma - b.gamma)) <= 2 * g.h


def test_exact_graph_recovered_from_samples():
    fb = extract_free_boundary(_exact(1 / 32))
    # the level set u = eps of ((x - t)_+)^2/2 sits at x = t + sqrt(2 eps)
    assert np.max(np.abs(fb.gamma - fb.t - np.sqrt(2 * fb.level))) < 1e-9
    assert fb.lipschitz <= np.sqrt(0.5) + 1e-6


def test_quotient_of_exact_solution_vanishes():
    rec = fb_regularity_pipeline(_exact(1 / 32))
    assert rec.seminorms["t"] <= 1e-8 and rec.seminorms["x1"] <= 1e-8
    assert np.allclose(rec.normal_mean, [1 / np.sqrt(2), -1 / np.sqrt(2)])
    assert rec.nondegeneracy > 0


def test_translation_invariance():
    a = fb_regularity_pipeline(_exact(1 / 32))
    b = fb_regularity_pipeline(_exact(1 / 32, shift=0.125))
    assert a.seminorms == b.seminorms and a.normal_mean == b.normal_mean
    assert a.normal_seminorm == b.normal_seminorm


def test_lipschitz_cap_enforced():
    with pytest.raises(HypothesisViolation):
        fb_regularity_pipeline(_exact(1 / 32), L_max=0.1)


def test_degenerate_field_rejected():
    g = obstacle_grid(1, 1 / 32, t_start=-0.5)
    # u decreasing away from the contact set breaks u_n >= c d
    F = Field.from_function(g, lambda X, t: np.clip(X[..., 0] - t, 0, None) * np.clip(0.6 - X[..., 0], 0, None))
    with pytest.raises(HypothesisViolation):
        fb_regularity_pipeline(ObstacleSolution.from_field(F, manufactured_f), r=0.5)


def test_curved_front_pipeline():
    sol, fb, rec = front_experiment(1 / 32)
    assert not fb.empty and np.isfinite(rec.normal_seminorm)
    assert rec.fb_exponent >= 1.0 - 0.15
    assert complementarity_defect(sol)[0] <= 1e-9


def test_curved_front_forcing_negative():
    front = CurvedFront()
    X = np.array([[0.5, 0.0], [-0.5, 0.2]])
    assert np.all(front.forcing(X, -0.1) < 0)
