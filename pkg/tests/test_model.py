import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpresonance.model import (BPoly, ForcingField, SpecError, TrigPoly,
                               derive_forcing_from_hamiltonian, load_spec, mode_add,
                               mode_neg, parse_real, random_hamiltonian_dict, sample_model,
                               sample_model_dict, save_spec, spec_from_dict, spec_to_dict)

coef = st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)
polys = st.lists(coef, min_size=1, max_size=4).map(
    lambda cs: TrigPoly(np.r_[cs[::-1][1:], cs]))   # odd length 2M+1
angles = st.floats(min_value=-10, max_value=10, allow_nan=False)


@given(polys, polys, angles)
def test_product_evaluates_pointwise(p, q, x):
    assert abs((p * q)(x) - p(x) * q(x)) <= 1e-9 * (1 + abs(p(x) * q(x)))


@given(polys, polys)
def test_product_commutes(p, q):
    assert (p * q).distance(q * p) < 1e-12


@given(polys, polys)
def test_derivative_product_rule(p, q):
    lhs = (p * q).deriv()
    rhs = p.deriv() * q + p * q.deriv()
    assert lhs.distance(rhs) <= 1e-10 * (1 + lhs.coeff_norm())


@given(polys, angles)
def test_conjugate_matches_pointwise(p, x):
    assert abs(p.conj()(x) - np.conj(p(x))) <= 1e-10 * (1 + abs(p(x)))


@given(polys, angles, angles)
def test_rotation_shifts_argument(p, x, d):
    assert abs(p.rotate(d)(x) - p(x + d)) <= 1e-9 * (1 + p.coeff_norm())


def test_closed_form_trig():
    x = 0.37
    assert abs(TrigPoly.sin(2)(x) - np.sin(2 * x)) < 1e-15
    assert abs(TrigPoly.cos(1)(x) - np.cos(x)) < 1e-15


def test_mode_helpers():
    assert mode_add((1, -2), (3, 4)) == (4, 2)
    assert mode_neg((1, -2)) == (-1, 2)


def test_parse_surd():
    assert parse_real("(1+sqrt(5))/2") == (1 + 5 ** 0.5) / 2
    assert parse_real("(1+√5)/2") == (1 + 5 ** 0.5) / 2
    assert parse_real("0.25") == 0.25
    with pytest.raises(SpecError):
        parse_real("golden")


def test_sample_model_derived_fields():
    # derived by hand: f = (1+cos a1) cos b gives F = 0, G = (1+cos a1) sin b
    s = sample_model()
    assert all(bp.is_zero() for bp in s.F.table.values())
    x = 0.8
    assert abs(s.G.derivative((0, 0), 0, 0)(x) - np.sin(x)) < 1e-15
    assert abs(s.G.derivative((1, 0), 0, 0)(x) - 0.5 * np.sin(x)) < 1e-15
    assert s.omega0_prime == 1.0
    assert s.is_hamiltonian


def test_roundtrip(tmp_path, random_model):
    path = tmp_path / "m.json"
    save_spec(random_model, path)
    back = load_spec(path)
    assert back.F.distance(random_model.F) == 0.0
    assert back.G.distance(random_model.G) == 0.0
    assert np.array_equal(back.omega, random_model.omega)


@pytest.mark.parametrize("mutate, kind", [
    (lambda d: d.update(omega0_poly=[0.1, 1.0]), "normalization"),
    (lambda d: d.update(omega0_poly=[0.0, 0.0]), "anisochrony"),
    (lambda d: d.update(omega=["1"]), "parse"),
    (lambda d: d["f"][0].update(b_coeffs=[[0.5, 0.3]]), "reality"),
    (lambda d: d["f"].append({"nu": [3, 0], "m": 0, "b_coeffs": [[1.0, 0.0]]}), "truncation"),
])
def test_validation_errors(mutate, kind):
    d = json.loads(json.dumps(sample_model_dict()))
    mutate(d)
    with pytest.raises(SpecError) as err:
        spec_from_dict(d)
    assert err.value.kind == kind


def test_inconsistent_hamiltonian_fields():
    d = sample_model_dict()
    d["G"] = [{"nu": [0, 0], "m": 1, "b_coeffs": [[0.1, 0.0]]}]
    with pytest.raises(SpecError) as err:
        spec_from_dict(d)
    assert err.value.kind == "hamiltonian"


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_random_models_are_real_and_hamiltonian(seed):
    spec = spec_from_dict(random_hamiltonian_dict(seed))
    F, G = derive_forcing_from_hamiltonian(spec.hamiltonian)
    assert F.distance(spec.F) == 0.0 and G.distance(spec.G) == 0.0
    assert spec.F.reality_defect() < 1e-15 and spec.G.reality_defect() < 1e-15
    assert spec_to_dict(spec_from_dict(spec_to_dict(spec))) == spec_to_dict(spec)


def test_bpoly_derivative_at_shift():
    # p(B) = 1 + 2B + 3B^2 ; p'(0.5) = 2 + 3 = 5, p''(.) = 6
    bp = BPoly((TrigPoly.const(1), TrigPoly.const(2), TrigPoly.const(3)))
    assert abs(bp.derivative_at(0, 1, 0.5).mean - 5) < 1e-15
    assert abs(bp.derivative_at(0, 2, 0.5).mean - 6) < 1e-15
    assert abs(bp.derivative_at(0, 0, 0.5).mean - 2.75) < 1e-15
    ff = ForcingField({(0,): bp})
    assert ff.derivative((1,), 0, 0).is_zero()
