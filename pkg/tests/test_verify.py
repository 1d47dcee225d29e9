import numpy as np
import pytest

from qpresonance.lindstedt import compute_series, melnikov
from qpresonance.verify import (NoRootError, StepSizeError, assemble, bifurcation_functions,
                                integrate_check, residual, solve_bifurcation, sweep)

EPS = [1e-4, 3e-4, 1e-3, 3e-3]


@pytest.fixture(scope="module")
def random_series(random_model):
    return compute_series(random_model, 2)


@pytest.fixture(scope="module")
def random_sweep(random_model, random_series):
    return sweep(random_model, EPS, 2, series=random_series)


def test_assemble_closed_form(sample):
    # derived: at beta0 = pi/2 the first-order beta coefficient of e1 is -eps/2
    ts = assemble(compute_series(sample, 2), 1e-3, np.pi / 2)
    assert abs(ts.beta[(1, 0)] - (-5e-4)) < 1e-18
    assert abs(ts.B[(1, 0)] - (-5e-4j)) < 1e-18
    assert ts.conjugation_defect() == 0.0
    b, B = ts.evaluate(0.0)
    assert b == pytest.approx(np.pi / 2 - 1e-3, abs=1e-6)


def test_assemble_rejects_bad_input(sample):
    ser = compute_series(sample, 2)
    with pytest.raises(ValueError):
        assemble(ser, 0.5, 0.0)
    with pytest.raises(ValueError):
        assemble(ser, 1e-3, 0.0, K=3)
    with pytest.raises(ValueError):
        assemble(compute_series(sample, 1, two_parameter=True), 1e-3, 0.0)


def test_unperturbed_solution_is_exact(random_model, random_series):
    ts = assemble(random_series, 0.0, 1.3)
    assert residual(ts).sup_residual == 0.0
    assert integrate_check(ts, T_end=5.0) < 1e-12


def test_solve_sample(sample):
    ser = compute_series(sample, 2)
    rep = melnikov(ser)
    sol = solve_bifurcation(ser, 1e-3, rep.zeros[0])
    assert abs(sol.beta0) < 1e-14 and sol.gamma_residual < 1e-14
    assert sol.hypothesis_status
    # the sign condition at the zero at pi fails for eps > 0
    assert not solve_bifurcation(ser, 1e-3, rep.zeros[1]).hypothesis_status
    assert solve_bifurcation(ser, 1e-3, 0.0, K=1).beta0 == 0.0


def test_solve_random(random_series):
    rep = melnikov(random_series)
    for z in rep.zeros:
        sol = solve_bifurcation(random_series, 1e-3, z)
        _, gam = bifurcation_functions(random_series, 1e-3)
        assert sol.gamma_residual < 1e-15
        assert abs(gam(sol.beta0)) < 1e-15
        assert abs(sol.beta0 - z.beta) < 1e-2


def test_no_root_without_sign_change(second_order):
    ser = compute_series(second_order, 2)
    with pytest.raises(NoRootError):
        solve_bifurcation(ser, 1e-3, np.pi / 4, trust=0.1)


def test_residual_sees_coefficient_perturbation(random_series, random_sweep, random_model):
    ts = assemble(random_series, 1e-3, random_sweep.rows[2].beta0)
    base = residual(ts).sup_residual
    ts.B[(1, 0)] += 1e-6
    ts.B[(-1, 0)] += 1e-6
    bumped = residual(ts).sup_residual
    expected = 1e-6 * abs(random_model.freq((1, 0)))
    assert abs(bumped - base) == pytest.approx(expected, rel=0.2)


def test_random_model_sweep_order(random_sweep):
    assert abs(random_sweep.residual_slope - 3.0) <= 0.2
    assert random_sweep.deviation_ok()


def test_off_root_residual_is_larger(random_series, random_sweep):
    row = random_sweep.rows[2]
    off = residual(assemble(random_series, row.eps, row.beta0 + 0.3)).sup_residual
    assert off > 10 * row.sup_residual


def test_step_size_guard(random_series):
    ts = assemble(random_series, 1e-3, 1.0)
    with pytest.raises(StepSizeError):
        integrate_check(ts, dt=0.5)


def test_sample_sweep_is_degenerate(sample):
    # (beta, B) = (0, B0bar) is an exact equilibrium: nothing to fit
    rep = sweep(sample, EPS, 2)
    assert all(r.sup_residual == 0.0 and r.deviation < 1e-15 for r in rep.rows)
    assert np.isnan(rep.residual_slope)
