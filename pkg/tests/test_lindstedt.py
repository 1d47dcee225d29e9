import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpresonance.lindstedt import (advance_order, compute_series, gradient_structure_check,
                                   melnikov, range_residuals, trig_roots)
from qpresonance.model import TrigPoly, beta_free_model, random_hamiltonian

X = 0.7


@pytest.mark.parametrize("key, fixture", [("sample_series", "sample"),
                                          ("second_order_series", "second_order")])
def test_series_matches_time_domain_oracle(key, fixture, frozen, request):
    # derived: symbolic time-domain expansion (tests/oracles/derive_oracles.py)
    spec = request.getfixturevalue(fixture)
    ser = compute_series(spec, 3)
    for r in frozen[key]:
        got = complex(ser.coefficient(r["k"], (r["m"], 0), r["component"])(r["beta0"]))
        assert abs(got - complex(*r["value"])) < 1e-13, r


def test_first_order_closed_forms(sample):
    ser = compute_series(sample, 1)
    s = np.sin(X)
    assert abs(ser.B[1][(1, 0)](X) - (-0.5j * s)) < 1e-15
    assert abs(ser.B[1][(-1, 0)](X) - (0.5j * s)) < 1e-15
    assert abs(ser.b[1][(1, 0)](X) - (-0.5 * s)) < 1e-15
    assert ser.B[1].get((0, 0), TrigPoly()).is_zero(1e-15)
    assert abs(ser.gamma0(1)(X) - s) < 1e-15


@pytest.mark.parametrize("fixture, K", [("sample", 5), ("random_model", 5), ("small_div", 4),
                                        ("second_order", 4)])
def test_range_equations_hold(fixture, K, request):
    ser = compute_series(request.getfixturevalue(fixture), K)
    assert range_residuals(ser) < 1e-12
    assert ser.reality_defect() < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(min_value=0, max_value=1000))
def test_random_models_solve_range_equations(seed):
    ser = compute_series(random_hamiltonian(seed), 3)
    assert range_residuals(ser) < 1e-12
    assert ser.reality_defect() < 1e-12


def test_incremental_equals_batch(random_model):
    full = compute_series(random_model, 3)
    inc = None
    for k in range(1, 4):
        inc = advance_order(random_model, inc, k)
    for k in range(1, 4):
        for nu in full.modes(k):
            for tab, other in ((full.b, inc.b), (full.B, inc.B)):
                a, b = tab[k].get(nu, TrigPoly()), other[k].get(nu, TrigPoly())
                assert a.distance(b) == 0.0
    with pytest.raises(ValueError):
        advance_order(random_model, inc, 5)


def test_two_parameter_shift_is_consistent(random_model):
    # zero-shift two-parameter series leaves B0 free; its nonzero modes at
    # first order do not involve B0 and therefore agree
    one = compute_series(random_model, 1)
    two = compute_series(random_model, 1, two_parameter=True)
    for nu in one.modes(1):
        if any(nu):
            assert one.b[1][nu].distance(two.b[1][nu]) < 1e-15
    with pytest.raises(ValueError):
        compute_series(random_model, 1, delta=0.1)


def test_sample_melnikov_report(sample):
    rep = melnikov(compute_series(sample, 2))
    assert rep.k0 == 1
    assert [round(z.beta, 12) for z in rep.zeros] == [0.0, round(np.pi, 12)]
    assert [z.order for z in rep.zeros] == [1, 1]
    assert rep.zeros[0].leading_derivative == pytest.approx(1.0)
    assert rep.zeros[1].leading_derivative == pytest.approx(-1.0)
    assert rep.zeros[0].eps_signs == (1,)
    assert rep.zeros[1].eps_signs == (-1,)


def test_second_order_melnikov(second_order):
    # derived: frozen oracle gives Gamma^(2)_0 = -sin(2 beta0)/4
    ser = compute_series(second_order, 3)
    rep = melnikov(ser)
    assert rep.k0 == 2
    assert rep.gamma_k0.distance(TrigPoly.sin(2) * -0.25) < 1e-15
    assert len(rep.zeros) == 4 and all(z.order == 1 for z in rep.zeros)


def test_beta_free_model_has_no_melnikov_function():
    rep = melnikov(compute_series(beta_free_model(), 3))
    assert rep.all_zero and rep.k0 is None


def test_gradient_structure(sample, random_model):
    g = gradient_structure_check(compute_series(sample, 2))
    assert g.ok
    assert g.potential.distance(TrigPoly.cos(1) * -1.0) < 1e-15
    assert gradient_structure_check(compute_series(random_model, 3)).ok


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=0.2, max_value=6.0), min_size=1, max_size=3, unique=True),
       st.integers(min_value=1, max_value=3))
def test_trig_roots_finds_prescribed_zeros(roots, power):
    roots = sorted(roots)
    if np.min(np.diff(roots), initial=1.0) < 0.05:
        return
    p = TrigPoly.const(1.0)
    for r in roots:
        p = p * TrigPoly.sin(1).rotate(-r)
    odd = 2 * (power // 2) + 1
    q = TrigPoly.const(1.0)
    for _ in range(odd):
        q = q * p
    found = trig_roots(q, 1e-9 * q.sup_norm(), 1e-6 * q.sup_norm())
    # sin(b - r) also vanishes at r + pi
    expect = sorted({round((r + s) % (2 * np.pi), 6) for r in roots for s in (0, np.pi)})
    got = sorted(round(b, 6) for b, _, _ in found)
    assert len(got) == len(expect)
    assert np.allclose(got, expect, atol=1e-5)
    assert all(n == odd for _, n, _ in found)


def test_divisor_floor_flags_small_modes(small_div, golden_profile):
    ser = compute_series(small_div, 2, divisor_floor=0.1)
    assert ser.flagged
