"""The eight acceptance criteria, each with its tolerance and time budget.

Every test stores one PASS/FAIL line that is printed in the terminal
summary, then asserts the criterion literally.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qpresonance.lindstedt import compute_series, melnikov, range_residuals
from qpresonance.model import beta_free_model, dissipative_control
from qpresonance.selfenergy import SelfEnergy, identity_suite, jacobian_identity
from qpresonance.smalldiv import Cutoffs
from qpresonance.trees import (GENERAL, HAMILTONIAN, ROOT_ROLES, TreeEnumerator, counting_sweep,
                               node_count_bound, oracle_check)
from qpresonance.verify import solve_bifurcation, sweep

EPS = [1e-4, 3e-4, 1e-3, 3e-3]


def _record(n, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    ACCEPTANCE_LINES[n] = (f"ACCEPTANCE {n}: {'PASS' if ok else 'FAIL'}  {detail}  "
                           f"[{elapsed:.2f}s / {budget}s]")
    return ok


def test_1_tree_oracle(sample, random_model):
    t = time.perf_counter()
    reps = [oracle_check(s, 3) for s in (sample, random_model)]
    reps += [oracle_check(s, 3, framework=GENERAL, delta=0.1) for s in (sample, random_model)]
    err = max(r.max_rel_error for r in reps)
    el = time.perf_counter() - t
    assert _record(1, err < 1e-11, f"max relative error {err:.2e}", el, 60)


def test_2_range_residuals(sample, random_model, small_div):
    t = time.perf_counter()
    worst = max(range_residuals(compute_series(s, 5)) for s in (sample, random_model, small_div))
    el = time.perf_counter() - t
    assert _record(2, worst < 1e-12, f"max residual {worst:.2e}", el, 10)


def test_3_partition_of_unity(golden_profile):
    t = time.perf_counter()
    cut = Cutoffs(golden_profile)
    a0 = golden_profile.alphas[0]
    floor = golden_profile.alpha_m(golden_profile.N) / 8.0
    rng = np.random.default_rng(12345)
    xs = []
    while len(xs) < 1000:
        x = rng.uniform(-a0, a0)
        if abs(x) >= floor:        # below it the finite profile has no scale left
            xs.append(x)
    xs = np.array(xs)
    defect = max(float(np.max(np.abs(cut.partition(p, xs) - 1.0))) for p in (0, 1, 2))
    most = max(len(cut.active_scales(x)) for x in xs)
    el = time.perf_counter() - t
    assert _record(3, defect < 1e-12 and most <= 2,
                   f"defect {defect:.2e}, max active scales {most}", el, 1)


def test_4_counting(sample, random_model, golden_profile):
    t = time.perf_counter()
    bad = 0
    for spec in (sample, random_model):
        for fw, kw in ((HAMILTONIAN, {}), (GENERAL, {"renormalised": True})):
            en = TreeEnumerator(spec, fw, **kw)
            for k in (1, 2, 3):
                for role in ROOT_ROLES:
                    bad += sum(len(node_count_bound(tr)) for tr in en.trees(k, role))
    sweeps = [counting_sweep(s, 3, golden_profile, framework=fw)
              for s in (sample, random_model) for fw in (HAMILTONIAN, GENERAL)]
    bad += sum(len(r.violations) for r in sweeps)
    n_assign = sum(r.assignments for r in sweeps)
    el = time.perf_counter() - t
    assert _record(4, bad == 0, f"{bad} violations over {n_assign} scale assignments", el, 120)


def test_5_self_energy(sample, small_div, random_model, golden_profile):
    t = time.perf_counter()
    sym = struct = 0.0
    xs = np.geomspace(1e-3, 0.5, 9)
    for spec in (sample, small_div):
        for k_max in (1, 2, 3):
            for fw, ren in ((HAMILTONIAN, False), (GENERAL, False), (GENERAL, True)):
                eng = SelfEnergy(spec, golden_profile, 0.01, 0.7, k_max=k_max, framework=fw,
                                 renormalised=ren)
                for n in range(4):
                    for x in xs:
                        v, _ = eng.M(n, x)
                        sym = max(sym, float(np.max(np.abs(eng.M(n, -x)[0] - v.conj()))))
                    m0 = eng.matrix(n, 0.0)
                    struct = max(struct, m0.real_defect(), m0.imaginary_defect())
    jac = max(max(jacobian_identity(s, 3, delta=0.1).values())
              for s in (sample, small_div, random_model))
    el = time.perf_counter() - t
    assert _record(5, sym < 1e-11 and struct < 1e-11 and jac < 1e-10,
                   f"symmetry {sym:.2e}, real/imaginary {struct:.2e}, jacobian {jac:.2e}",
                   el, 60)


def test_6_hamiltonian_identities():
    t = time.perf_counter()
    rep = identity_suite(beta_free_model(), k_max=3)
    ctrl = identity_suite(dissipative_control(), k_max=3)
    worst = max(rep.defects.values())
    trace = ctrl.defects["trace"]
    el = time.perf_counter() - t
    assert _record(6, rep.precondition and worst < 1e-11 and trace > 1e-3,
                   f"max defect {worst:.2e}, control trace defect {trace:.2e}", el, 30)


def test_7_residual_order(sample):
    t = time.perf_counter()
    rep = sweep(sample, EPS, 2, T_end=50.0)
    slope = rep.residual_slope
    ok = abs(slope - 3.0) <= 0.2 and rep.deviation_ok()
    el = time.perf_counter() - t
    worst = max(r.sup_residual for r in rep.rows)
    assert _record(7, ok, f"slope {slope:.3f}, max residual {worst:.2e}, "
                          f"deviation bound {rep.deviation_ok()}", el, 60)


def test_8_melnikov(sample):
    t = time.perf_counter()
    ser = compute_series(sample, 2)
    rep = melnikov(ser)
    zeros_ok = (rep.k0 == 1 and len(rep.zeros) == 2
                and np.allclose([z.beta for z in rep.zeros], [0.0, np.pi], atol=1e-12)
                and all(z.order == 1 for z in rep.zeros))
    sign_ok = zeros_ok and rep.zeros[0].eps_signs == (1,)
    roots = np.array([solve_bifurcation(ser, e, rep.zeros[0]).beta0 for e in EPS])
    with np.errstate(divide="ignore"):
        la = np.log(np.abs(roots))
    slope = (float(np.polyfit(np.log(EPS), la, 1)[0]) if np.all(np.isfinite(la))
             else float("nan"))
    el = time.perf_counter() - t
    ok = zeros_ok and sign_ok and abs(slope - 1.0) <= 0.2
    assert _record(8, ok, f"k0={rep.k0}, zeros ok {zeros_ok}, sign ok {sign_ok}, "
                          f"max |beta0*| {np.abs(roots).max():.2e}, slope {slope:.3f}", el, 10)
