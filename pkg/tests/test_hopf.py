from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bhlab.errors import ConfigError
from bhlab.geometry import GraphFunction, LipschitzDomain
from bhlab.hopf import DiniModulus, dini_domain, hopf_constants, hopf_experiment, sequence_check


def test_sequence_without_weights_is_constant():
    rec = sequence_check(1, Fraction(3, 2), [0] * 50, 1)
    assert rec.hypothesis and rec.holds
    assert all(v == Fraction(3, 2) for v in rec.a[1:])


def test_sequence_geometric_weights():
    w = [Fraction(1, 12 * 2 ** k) for k in range(1, 199)]
    rec = sequence_check(1, 1, w, 1)
    # independent evaluation of the same recurrence
    a = [Fraction(1), Fraction(1)]
    for k, wk in enumerate(w):
        a.append(a[k + 1] - wk * a[k])
    assert rec.a == a
    assert rec.hypothesis and rec.holds and rec.min_a == min(a[1:]) > Fraction(1, 6)
    assert isinstance(rec.min_a, Fraction)


def test_sequence_hypothesis_failure_is_not_a_verdict():
    rec = sequence_check(1, 1, [Fraction(1, 2)] * 20, 1)
    assert not rec.hypothesis and rec.holds is None


def test_sequence_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        sequence_check(0, 1, [0], 1)
    with pytest.raises(ConfigError):
        sequence_check(1, 1, [-1], 1)


def test_floats_enter_exactly():
    rec = sequence_check(0.1, 0.1, [0.0], 1.0)
    assert rec.a[0] == Fraction(0.1) and rec.a[0] != Fraction(1, 10)


@settings(max_examples=60, deadline=None)
@given(st.fractions(Fraction(1, 10), 10), st.fractions(Fraction(1, 10), 10), st.fractions(Fraction(1, 4), 4),
       st.lists(st.fractions(0, 1), min_size=1, max_size=40))
def test_lemma_conclusion_under_hypothesis(a1, a2, C, raw):
    """Whenever the weight sum is small enough, every a_k with k >= 2 stays above a_2/6."""
    budget = Fraction(1) / (2 * C) / (2 + a1 / a2)
    total = sum(raw, Fraction(0))
    w = [v * budget / total for v in raw] if total > 0 else raw
    rec = sequence_check(a1, a2, w, C, terms=len(w) + 2)
    assert rec.hypothesis
    assert rec.holds


def test_zero_modulus_constants():
    hc = hopf_constants(DiniModulus.zero(), k_max=30)
    assert all(b == 0 for b in hc.b[1:])
    assert all(a == hc.c1 for a in hc.a)
    assert hc.claim_a and hc.claim_b and not hc.falsified


def test_power_modulus_claims():
    c0 = Fraction(1, 96)
    om = DiniModulus.power(float(c0) / 4, 0.5)
    hc = hopf_constants(om, k_max=60)
    assert om.converged and om.integral == pytest.approx(float(c0) / 2, rel=1e-8)
    assert hc.claim_a and hc.claim_b and not hc.falsified
    assert min(hc.a) >= hc.c1 / 12 and hc.floor == hc.c1 / 24


def test_log_squared_modulus_claims():
    om = DiniModulus.log_squared(0.005)
    # int_0^1 dr / (r log^2(e/r)) = 1
    assert om.integral == pytest.approx(0.005, rel=1e-4)
    hc = hopf_constants(om, k_max=60)
    assert hc.claim_a and hc.claim_b
    assert min(hc.a[1:]) > hc.c1 / 12


def test_inverse_log_is_not_dini():
    om = DiniModulus(lambda r: 0.01 / np.log(np.e / np.maximum(r, 1e-300)), label="1/log")
    assert not om.converged


def test_decreasing_modulus_rejected():
    with pytest.raises(ConfigError):
        DiniModulus(lambda r: 1 - r)


def test_c0_only_lowered():
    with pytest.raises(ConfigError):
        hopf_constants(DiniModulus.zero(), c0=Fraction(1, 50))


def test_large_modulus_outside_regime():
    hc = hopf_constants(DiniModulus.power(2.0, 0.5), k_max=30)
    assert not hc.regime["omega_small"] and not hc.falsified


def test_smallness_radius_and_rescaling():
    om = DiniModulus.power(1.0, 0.5)
    r = om.smallness_radius(1 / 96)
    assert om(r) <= 1 / 96 and 2 * np.sqrt(r) <= 1 / 96
    assert 2 * np.sqrt(2 * r) > 1 / 96
    blown = om.rescaled(r)
    assert blown.integral == pytest.approx(2 * np.sqrt(r), rel=1e-8)


def test_flat_experiment_exact_slope():
    run = hopf_experiment(LipschitzDomain(GraphFunction.flat(1)), 1 / 32)
    # data x_n stays caloric, normalized at x_n = 1/2
    assert run.c_fit == pytest.approx(2.0, abs=1e-9) and run.normalizer == pytest.approx(0.5)


def test_dini_domain_fit_stable():
    dom = dini_domain(lambda s: 0.05 * s ** 0.3)
    a = hopf_experiment(dom, 1 / 16).c_fit
    b = hopf_experiment(dom, 1 / 32).c_fit
    assert a > 0 and b > 0 and abs(a - b) <= 0.2 * b


def test_budget_sweep_monotone():
    dom = dini_domain(lambda s: 0.05 * s ** 0.3)
    fits = [hopf_experiment(dom, 1 / 32, budget=b) for b in (0.0, 0.5, 1.0)]
    c = [f.c_fit for f in fits]
    assert c[0] >= c[1] >= c[2] > 0
    assert fits[0].rhs_scale == 0 < fits[1].rhs_scale < fits[2].rhs_scale


def test_budget_range():
    with pytest.raises(ConfigError):
        hopf_experiment(LipschitzDomain(GraphFunction.flat(1)), 1 / 16, budget=1.5)


def test_forcing_scale_meets_budget():
    # |d^(1-alpha) g| <= s, and s = budget * c0 * u(e_n/2, -1/2) by superposition
    dom = dini_domain(lambda s: 0.05 * s ** 0.3)
    run = hopf_experiment(dom, 1 / 16, budget=0.5)
    assert run.rhs_scale == pytest.approx(0.5 / 96 * run.normalizer, rel=1e-12)
