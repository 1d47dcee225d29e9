import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpresonance.model import beta_free_model, dissipative_control
from qpresonance.selfenergy import (RegularisedSelfEnergy, SelfEnergy, determinant_jet,
                                    identity_suite, jacobian_identity, m_minus1, propagator,
                                    self_energy, self_energy_jets)
from qpresonance.trees import GENERAL, HAMILTONIAN

X = 0.7


def test_lowest_scale_closed_form(sample):
    # derived: F = B gives [[0, 1], [0, 0]]; G = eps (1 + cos t) sin beta averages to eps sin beta
    M = m_minus1(sample, 0.01, X, sample.B0bar)
    assert np.allclose(M, [[0, 1], [0.01 * np.cos(X), 0]], atol=1e-16)


def test_low_order_jets(sample, random_model):
    for spec in (sample, random_model):
        jets = self_energy_jets(spec, 1)
        assert jets[0][0, 1, 0](X) == pytest.approx(spec.omega0_derivative(1, 0))
        for (u, e) in ((0, 0), (1, 0), (1, 1)):
            assert jets[0][u, e, 0].is_zero(1e-15)
    # order one, sample: only the G-row averaged term survives
    jets = self_energy_jets(sample, 1)
    assert abs(jets[1][1, 0, 0](X) - np.cos(X)) < 1e-15


@pytest.mark.parametrize("framework, renormalised", [(HAMILTONIAN, False), (GENERAL, False),
                                                     (GENERAL, True)])
@pytest.mark.parametrize("fixture", ["sample", "small_div"])
def test_symmetry_and_structure(fixture, framework, renormalised, golden_profile, request):
    spec = request.getfixturevalue(fixture)
    eng = SelfEnergy(spec, golden_profile, 0.01, X, k_max=3, framework=framework,
                     renormalised=renormalised)
    xs = np.geomspace(1e-3, 0.5, 7)
    for n in range(0, 4):
        for x in xs:
            v, d = eng.M(n, x)
            vm, dm = eng.M(n, -x)
            assert np.max(np.abs(vm - v.conj())) < 1e-11
            assert np.max(np.abs(dm + d.conj())) < 1e-11 * max(1.0, np.abs(d).max())
        M0 = eng.matrix(n, 0.0)
        assert M0.real_defect() < 1e-11
        assert M0.imaginary_defect() < 1e-11


@settings(max_examples=15, deadline=None)
@given(st.floats(min_value=2e-3, max_value=0.4), st.integers(min_value=0, max_value=3),
       st.booleans())
def test_derivative_matches_finite_difference(small_div, golden_profile, x, n, renormalised):
    eng = SelfEnergy(small_div, golden_profile, 0.01, X, k_max=2, renormalised=renormalised)
    h = 1e-6 * x
    fd = (eng.M(n, x + h)[0] - eng.M(n, x - h)[0]) / (2 * h)
    d = eng.M(n, x)[1]
    assert np.max(np.abs(fd - d)) <= 1e-5 * max(1.0, np.abs(d).max())


def test_scale_sum_reproduces_jets(small_div, golden_profile):
    eps = 0.02
    eng = SelfEnergy(small_div, golden_profile, eps, X, k_max=2, framework=HAMILTONIAN)
    total = sum(eng.M(q, 0.0)[0] for q in range(-1, golden_profile.N + 1))
    jets = self_energy_jets(small_div, 2)
    ref = np.array([[sum(eps ** k * complex(jets[k][u, e, 0](X)) for k in jets)
                     for e in range(2)] for u in range(2)])
    assert np.max(np.abs(total - ref)) < 1e-12 * np.abs(ref).max()


def test_unperturbed_propagator(sample, golden_profile):
    # trivial: at eps = 0 only the frequency slope couples the components
    x = 1.0
    G = propagator(sample, golden_profile, 0, x, 0.0, X, k_max=2)
    w = sample.omega0_derivative(1, 0)
    ref = np.array([[1 / (1j * x), w / (1j * x) ** 2], [0, 1 / (1j * x)]])
    assert np.allclose(G, ref, atol=1e-15)


def test_renormalised_without_corrections_is_plain_at_order_one(sample, golden_profile):
    # with k_max = 1 no graph has an internal line whose propagator could be dressed
    plain = SelfEnergy(sample, golden_profile, 0.01, X, k_max=1)
    ren = SelfEnergy(sample, golden_profile, 0.01, X, k_max=1, renormalised=True)
    for n in range(3):
        for x in (0.0, 0.05, 0.3):
            assert np.allclose(plain.M(n, x)[0], ren.M(n, x)[0], atol=1e-15)


def test_identity_suite_beta_free():
    rep = identity_suite(beta_free_model(), k_max=3)
    assert rep.precondition and rep.ok(1e-11)


def test_identity_suite_detects_dissipation():
    rep = identity_suite(dissipative_control(), k_max=3)
    assert rep.precondition
    assert rep.defects["trace"] > 1e-3
    assert not rep.ok(1e-11)


@pytest.mark.parametrize("fixture", ["sample", "random_model", "small_div"])
def test_chain_identities(fixture, request):
    rep = identity_suite(request.getfixturevalue(fixture), k_max=3)
    assert rep.defects["gamma_chain"] < 1e-11
    assert rep.defects["phi_chain"] < 1e-11


@pytest.mark.parametrize("fixture", ["sample", "random_model", "small_div"])
def test_jacobian_identity(fixture, request):
    defects = jacobian_identity(request.getfixturevalue(fixture), 3, delta=0.1)
    assert max(defects.values()) < 1e-10


def test_low_order_determinant_vanishes(sample, second_order):
    assert max(determinant_jet(sample)) < 1e-12
    assert max(determinant_jet(second_order)) < 1e-12


def test_regularised_determinant(second_order, golden_profile):
    reg = RegularisedSelfEnergy(second_order, golden_profile, 0.01, X, k_max=2)
    assert reg.k0 == 2
    jet = reg.determinant_jet(1)
    assert np.max(np.abs(jet)) < 1e-10
    low = sum(jet[k] * 0.01 ** k for k in range(reg.k0))
    assert reg.Delta(1) == pytest.approx(reg.determinant(1) - low)
    assert 0.0 <= reg.xi_factor(1) <= 1.0
    assert reg.xi_factor(-1) == 1.0


def test_self_energy_pair(sample, golden_profile):
    M, acc = self_energy(sample, golden_profile, 1, 0.1, 0.01, X, k_max=2)
    assert M.scale == 1 and acc.scale == 1
    eng = SelfEnergy(sample, golden_profile, 0.01, X, k_max=2)
    assert np.allclose(acc.value, eng.accumulated(1, 0.1)[0])


def test_hamiltonian_engine_rejects_shifted_B0(sample, golden_profile):
    with pytest.raises(ValueError):
        SelfEnergy(sample, golden_profile, 0.01, X, sample.B0bar + 0.1, framework=HAMILTONIAN)
