"""Assembled truncated solutions, the bifurcation solve and independent checks."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .lindstedt import MelnikovZero, SolutionSeries, compute_series, melnikov
from .model import SystemSpec, TrigPoly, zero_mode

EPS_MAX = 0.1
ALIAS_RATIO = 1e-10
MAX_GRID_POINTS = 1 << 21


class NoRootError(ArithmeticError):
    """The bifurcation function has no root in the trust interval."""


class StepSizeError(ValueError):
    """The integrator step does not resolve the fastest retained frequency."""


class AliasingWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

@dataclass
class TruncatedSolution:
    """Numeric Fourier tables of the truncated series at fixed (eps, beta0)."""

    spec: SystemSpec
    eps: float
    beta0: float
    B0: float
    K: int
    beta: dict
    B: dict
    provenance: dict = field(default_factory=dict)

    def modes(self) -> list:
        return sorted(set(self.beta) | set(self.B))

    def _arrays(self, table):
        modes = sorted(table)
        freqs = np.array([self.spec.freq(nu) for nu in modes])
        coef = np.array([table[nu] for nu in modes], dtype=complex)
        return freqs, coef

    def evaluate(self, t):
        """(beta(t), B(t)) along the trajectory started at phase zero."""
        t = np.asarray(t, dtype=float)
        out = []
        for table in (self.beta, self.B):
            fr, c = self._arrays(table)
            out.append(np.real(np.exp(1j * np.multiply.outer(t, fr)) @ c))
        return out[0], out[1]

    def conjugation_defect(self) -> float:
        worst = 0.0
        for table in (self.beta, self.B):
            for nu, v in table.items():
                w = table.get(tuple(-a for a in nu), 0.0)
                worst = max(worst, abs(np.conj(v) - w))
        return worst


def assemble(series: SolutionSeries, eps: float, beta0: float, K: int | None = None, *,
             eps_max: float = EPS_MAX, provenance: dict | None = None) -> TruncatedSolution:
    """Sum the series through order K at (eps, beta0).

    B0 = B0bar + sum_k eps^k B^(k)_0(beta0); beta's zero mode is beta0 plus
    whatever zero-mode corrections the series carries.
    """
    if abs(eps) > eps_max:
        raise ValueError(f"|eps| = {abs(eps)} exceeds eps_max = {eps_max}")
    if series.two_parameter:
        raise ValueError("assembly needs the one-parameter series")
    K = series.K if K is None else K
    if K > series.K:
        raise ValueError(f"series only has orders up to {series.K}")
    spec = series.spec
    z = zero_mode(spec.d)
    beta = {z: complex(beta0)}
    B = {z: complex(spec.B0bar)}
    for k in range(1, K + 1):
        w = eps ** k
        for tab, src in ((beta, series.b[k]), (B, series.B[k])):
            for nu, p in src.items():
                tab[nu] = tab.get(nu, 0j) + w * complex(p(beta0))
    return TruncatedSolution(spec, eps, beta0, float(np.real(B[z])), K, beta, B,
                             dict(provenance or {}))


# ---------------------------------------------------------------------------
# bifurcation equation
# ---------------------------------------------------------------------------

@dataclass
class BifurcationSolution:
    beta0: float
    gamma_residual: float
    phi_residual: float
    iterations: int
    method: str
    hypothesis_status: bool
    seed: float


def bifurcation_functions(series: SolutionSeries, eps: float, K: int | None = None) -> tuple:
    """Truncated (Phi_0, Gamma_0) as trigonometric polynomials in beta0."""
    K = series.K if K is None else K
    z = zero_mode(series.d)
    phi = TrigPoly()
    gam = TrigPoly()
    for k in range(1, K + 1):
        phi = phi + series.Phi(k, z) * eps ** k
        gam = gam + series.gamma0(k) * eps ** k
    return phi, gam


def solve_bifurcation(series: SolutionSeries, eps: float, seed, K: int | None = None, *,
                      trust: float | None = None, tol: float = 1e-15,
                      max_iter: int = 50) -> BifurcationSolution:
    """Root of the truncated Melnikov equation near a seed zero.

    Newton is used for simple zeros; higher-order (odd) zeros, a vanishing
    slope or a Newton step leaving the trust interval switch to bracketing.
    """
    if isinstance(seed, MelnikovZero):
        beta_s, order = seed.beta, seed.order
        status = seed.odd and (np.sign(eps) in seed.eps_signs)
    else:
        beta_s, order, status = float(seed), 1, True
    phi, gam = bifurcation_functions(series, eps, K)
    g = lambda b: float(np.real(gam(b)))
    dgam = gam.deriv()
    dg = lambda b: float(np.real(dgam(b)))
    if trust is None:
        trust = 0.5
        rep = melnikov(series)
        others = [z.beta for z in rep.zeros if abs(z.beta - beta_s) > 1e-9]
        if others:
            gaps = [abs((z - beta_s + np.pi) % (2 * np.pi) - np.pi) for z in others]
            trust = min(trust, 0.5 * min(gaps))
    lo, hi = beta_s - trust, beta_s + trust

    x, method, it = beta_s, "newton", 0
    ok = False
    if order == 1:
        scale = max(gam.coeff_norm(), 1e-300)
        for it in range(1, max_iter + 1):
            d = dg(x)
            if abs(d) < 1e-12 * scale:
                break
            step = g(x) / d
            x -= step
            if not lo <= x <= hi:
                break
            if abs(step) <= tol * max(1.0, abs(x)):
                ok = True
                break
        ok = ok or (lo <= x <= hi and g(x) == 0.0)
    if not ok:
        method = "bisection"
        if g(beta_s) == 0.0:
            x = beta_s
        else:
            grid = np.linspace(lo, hi, 65)
            vals = np.array([g(b) for b in grid])
            idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)
            if idx.size == 0:
                raise NoRootError(f"no sign change of the Melnikov function in [{lo:.3g}, {hi:.3g}]")
            i = idx[np.argmin(np.abs(grid[idx] - beta_s))]
            x = brentq(g, grid[i], grid[i + 1], xtol=1e-16, rtol=4 * np.finfo(float).eps,
                       maxiter=200)
    return BifurcationSolution(float(x), abs(g(x)), abs(float(np.real(phi(x)))), it, method,
                               bool(status), float(beta_s))


# ---------------------------------------------------------------------------
# Fourier residual
# ---------------------------------------------------------------------------

class _Field:
    """Vectorised evaluator of one forcing field sum_nu e^{i nu.alpha} P_nu(beta, B)."""

    def __init__(self, spec: SystemSpec, ff):
        nus, ms, js, cs = [], [], [], []
        for nu in ff.modes():
            bp = ff.get(nu)
            for j, tp in enumerate(bp.coeffs):
                for m, c in tp.as_dict().items():
                    if c != 0:
                        nus.append(nu)
                        ms.append(m)
                        js.append(j)
                        cs.append(c)
        self.nu = np.array(nus, dtype=float).reshape(-1, spec.d)
        self.theta = self.nu @ np.asarray(spec.omega, float)
        self.m = np.array(ms, dtype=float)
        self.j = np.array(js, dtype=int)
        self.c = np.array(cs, dtype=complex)
        self.B0bar = spec.B0bar

    def at_time(self, t: float, beta: float, B: float) -> float:
        ph = np.exp(1j * (self.theta * t + self.m * beta))
        return float(np.real(np.sum(self.c * ph * (B - self.B0bar) ** self.j)))

    def on_grid(self, alpha: np.ndarray, beta: np.ndarray, B: np.ndarray) -> np.ndarray:
        """alpha has shape (d, *grid); beta and B have the grid shape."""
        out = np.zeros(beta.shape, dtype=complex)
        dB = B - self.B0bar
        for nu, m, j, c in zip(self.nu, self.m, self.j, self.c):
            phase = np.tensordot(nu, alpha, axes=1) + m * beta
            out += c * np.exp(1j * phase) * dB ** j
        return np.real(out)


@dataclass
class ResidualReport:
    table: dict           # mode -> (beta-row residual, B-row residual)
    sup_residual: float
    alias_ratio: float
    grid: int


def _grid_size(solution: TruncatedSolution, requested: int | None) -> int:
    if requested is not None:
        return requested
    span = max([max(abs(a) for a in nu) for nu in solution.modes()] + [1])
    span = max(span, max([max(abs(a) for a in nu) for nu in solution.spec.support()] + [1]))
    n = 8
    while n < 8 * span + 16:
        n *= 2
    while n ** solution.spec.d > MAX_GRID_POINTS and n > 8:
        n //= 2
    return n


def _to_grid(table: dict, N: int, d: int) -> np.ndarray:
    arr = np.zeros((N,) * d, dtype=complex)
    for nu, v in table.items():
        arr[tuple(a % N for a in nu)] += v
    return np.real(np.fft.ifftn(arr) * N ** d)


def residual(solution: TruncatedSolution, spec: SystemSpec | None = None,
             grid: int | None = None) -> ResidualReport:
    """Fourier residual of the full equations of motion on the retained modes.

    The assembled solution is a function on the torus; the right-hand side is
    composed pointwise on a regular torus grid and transformed back with a
    d-dimensional FFT, so every frequency omega.nu is resolved exactly.
    """
    spec = spec or solution.spec
    d = spec.d
    N = _grid_size(solution, grid)
    axes = np.meshgrid(*([2 * np.pi * np.arange(N) / N] * d), indexing="ij")
    alpha = np.stack(axes)
    beta = _to_grid(solution.beta, N, d)
    B = _to_grid(solution.B, N, d)
    eps = solution.eps
    Phi = spec.omega0_eval(B) + eps * _Field(spec, spec.F).on_grid(alpha, beta, B)
    Gam = eps * _Field(spec, spec.G).on_grid(alpha, beta, B)
    cPhi = np.fft.fftn(Phi) / N ** d
    cGam = np.fft.fftn(Gam) / N ** d

    k = np.fft.fftfreq(N, 1.0 / N).astype(int)
    edge = np.zeros((N,) * d, bool)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = N
        edge |= (np.abs(k) >= N // 4).reshape(shape)
    head = max(np.abs(cPhi).max(), np.abs(cGam).max(), 1e-300)
    tail = max(np.abs(cPhi[edge]).max(), np.abs(cGam[edge]).max())
    ratio = float(tail / head)
    if ratio > ALIAS_RATIO and eps != 0:
        warnings.warn(f"spectral tail {ratio:.2e} of the head at grid {N}", AliasingWarning)

    table = {}
    sup = 0.0
    for nu in solution.modes():
        idx = tuple(a % N for a in nu)
        w = 1j * spec.freq(nu)
        rb = w * solution.beta.get(nu, 0j) - cPhi[idx]
        rB = w * solution.B.get(nu, 0j) - cGam[idx]
        if nu == zero_mode(d):
            rb = -cPhi[idx]   # the constant part of beta is a free phase
        table[nu] = (complex(rb), complex(rB))
        sup = max(sup, abs(rb), abs(rB))
    return ResidualReport(table, float(sup), ratio, N)


# ---------------------------------------------------------------------------
# time integration
# ---------------------------------------------------------------------------

# Dormand-Prince coefficients; the fifth-order weights drive a fixed step
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])


def integrate_check(solution: TruncatedSolution, spec: SystemSpec | None = None,
                    T_end: float = 50.0, dt: float = 0.01, *, return_path: bool = False):
    """Largest distance between an RK5 trajectory and the assembled solution."""
    spec = spec or solution.spec
    fastest = max([abs(spec.freq(nu)) for nu in solution.modes()] + [0.0])
    if dt * fastest >= 0.1:
        raise StepSizeError(f"dt*max|omega.nu| = {dt * fastest:.3g} >= 0.1")
    F = _Field(spec, spec.F)
    G = _Field(spec, spec.G)
    eps = solution.eps

    def rhs(t, y):
        b, B = y
        return np.array([float(spec.omega0_eval(B)) + eps * F.at_time(t, b, B),
                         eps * G.at_time(t, b, B)])

    n = int(round(T_end / dt))
    ts = np.arange(n + 1) * dt
    ref_b, ref_B = solution.evaluate(ts)
    y = np.array([ref_b[0], ref_B[0]])
    dev = np.zeros(n + 1)
    for i in range(n):
        t = ts[i]
        ks = []
        for s in range(6):
            yi = y + dt * sum(a * kk for a, kk in zip(_A[s], ks))
            ks.append(rhs(t + _C[s] * dt, yi))
        y = y + dt * sum(b * kk for b, kk in zip(_B, ks))
        dev[i + 1] = max(abs(y[0] - ref_b[i + 1]), abs(y[1] - ref_B[i + 1]))
    if return_path:
        return float(dev.max()), ts, dev
    return float(dev.max())


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    eps: float
    beta0: float
    sup_residual: float
    deviation: float


@dataclass
class SweepReport:
    rows: list
    residual_slope: float
    residual_constant: float
    deviation_constant: float
    T_end: float
    K: int

    def deviation_ok(self, factor: float = 10.0, constant: float | None = None) -> bool:
        """Every deviation below factor * C * eps^(K+1) * T_end.

        C defaults to the constant fitted to the deviations themselves.
        """
        C = self.deviation_constant if constant is None else constant
        if not np.isfinite(C):
            return False
        return all(r.deviation < factor * C * r.eps ** (self.K + 1) * self.T_end
                   for r in self.rows)


def _fit(eps, vals, power):
    """Log-log slope and the geometric-mean constant of vals / eps^power.

    Any zero value makes both undefined (nan).
    """
    if np.any(np.asarray(vals) <= 0):
        return float("nan"), float("nan")
    le, lv = np.log(eps), np.log(vals)
    slope = float(np.polyfit(le, lv, 1)[0])
    const = float(np.exp(np.mean(lv - power * le)))
    return slope, const


def sweep(spec: SystemSpec, eps_list, K: int = 2, *, seed=None, T_end: float = 50.0,
          dt: float = 0.01, series: SolutionSeries | None = None,
          integrate: bool = True) -> SweepReport:
    """Solve, assemble and verify at every eps; fit residual order and constants."""
    series = series or compute_series(spec, K)
    if seed is None:
        rep = melnikov(series)
        good = [z for z in rep.zeros if z.odd]
        if not good:
            raise NoRootError("no odd-order Melnikov zero to seed the solve")
        seed = good[0]
    rows = []
    for eps in eps_list:
        sol = solve_bifurcation(series, eps, seed, K)
        ts = assemble(series, eps, sol.beta0, K, provenance={"seed": sol.seed})
        res = residual(ts, spec)
        dev = integrate_check(ts, spec, T_end, dt) if integrate else float("nan")
        rows.append(SweepRow(float(eps), sol.beta0, res.sup_residual, dev))
    e = np.array([r.eps for r in rows])
    slope, Cr = _fit(e, np.array([r.sup_residual for r in rows]), K + 1)
    Cd = float("nan")
    if integrate:
        Cd = _fit(e, np.array([r.deviation for r in rows]) / T_end, K + 1)[1]
    return SweepReport(rows, slope, Cr, Cd, T_end, K)
