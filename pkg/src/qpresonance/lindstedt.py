"""Formal solution series of the range equations and Melnikov analysis.

Per-order data are dictionaries ``mode -> TrigPoly``.  Composition of the
forcing with the perturbed solution is carried out on power tables of the
deviations ``beta - beta0`` and ``B - B0``: entry ``[p][n]`` is the order-n
coefficient of the p-th power, itself a mode dictionary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import SystemSpec, TrigPoly, mode_add, mode_neg, zero_mode

ModeTable = dict


# ---------------------------------------------------------------------------
# mode-table arithmetic
# ---------------------------------------------------------------------------

def table_mul(a: ModeTable, b: ModeTable) -> ModeTable:
    """Convolution over modes with TrigPoly products."""
    out: dict = {}
    for nu1 in sorted(a):
        p1 = a[nu1]
        for nu2 in sorted(b):
            nu = mode_add(nu1, nu2)
            term = p1 * b[nu2]
            out[nu] = out[nu] + term if nu in out else term
    return out


def table_add_into(acc: ModeTable, other: ModeTable, scale=1.0, shift=None) -> None:
    for nu in sorted(other):
        key = mode_add(nu, shift) if shift is not None else nu
        term = other[nu] * scale if scale != 1.0 else other[nu]
        acc[key] = acc[key] + term if key in acc else term


def table_distance(a: ModeTable, b: ModeTable) -> float:
    keys = set(a) | set(b)
    zero = TrigPoly()
    return max((a.get(k, zero).distance(b.get(k, zero)) for k in keys), default=0.0)


def table_norm(a: ModeTable) -> float:
    return max((p.coeff_norm() for p in a.values()), default=0.0)


class PowerTable:
    """Order-by-order coefficients of the powers of a series without constant term.

    ``base[n]`` is the order-n coefficient (n >= 1) of the series; ``get(p, n)``
    returns the order-n coefficient of its p-th power.
    """

    def __init__(self, d: int):
        self.d = d
        self.base: dict = {}
        self._pows: dict = {}

    def set_order(self, n: int, table: ModeTable) -> None:
        self.base[n] = table

    def get(self, p: int, n: int) -> ModeTable:
        if p == 0:
            return {zero_mode(self.d): TrigPoly.const(1.0)} if n == 0 else {}
        if n < p:
            return {}
        if p == 1:
            return self.base.get(n, {})
        key = (p, n)
        if key not in self._pows:
            acc: dict = {}
            for i in range(1, n - p + 2):
                left = self.base.get(i)
                if not left:
                    continue
                right = self.get(p - 1, n - i)
                if right:
                    table_add_into(acc, table_mul(left, right))
            self._pows[key] = acc
        return self._pows[key]


# ---------------------------------------------------------------------------
# the series
# ---------------------------------------------------------------------------

@dataclass
class SolutionSeries:
    """Coefficients of the formal solution, orders 1..K.

    ``b[k]`` and ``B[k]`` hold the solution coefficients; ``phi[k]`` and
    ``gamma[k]`` hold the composed right-hand sides (nonlinear frequency
    correction plus F, respectively G) for every mode including zero.
    In the two-parameter variant ``B0`` is a free parameter, so ``B[k]`` has
    no zero mode and the zero-mode data are the bifurcation functions.
    """

    spec: SystemSpec
    K: int = 0
    b: dict = field(default_factory=dict)
    B: dict = field(default_factory=dict)
    phi: dict = field(default_factory=dict)
    gamma: dict = field(default_factory=dict)
    two_parameter: bool = False
    delta: complex = 0.0
    flagged: list = field(default_factory=list)
    divisor_floor: float = 0.0

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def slope(self) -> complex:
        """Derivative of the frequency map at the expansion point."""
        return self.spec.omega0_derivative(1, self.delta)

    def modes(self, k: int) -> list:
        return sorted(set(self.b.get(k, {})) | set(self.B.get(k, {})))

    def Phi(self, k: int, nu) -> TrigPoly:
        """Full frequency-row coefficient ``omega0' B^(k)_nu + phi^(k)_nu``."""
        nu = tuple(nu)
        if k == 0:
            if nu == zero_mode(self.d):
                return TrigPoly.const(self.spec.omega0_derivative(0, self.delta))
            return TrigPoly()
        out = self.phi[k].get(nu, TrigPoly())
        Bk = self.B[k].get(nu)
        if Bk is not None:
            out = out + Bk * self.slope
        return out

    def Gamma(self, k: int, nu) -> TrigPoly:
        if k == 0:
            return TrigPoly()
        return self.gamma[k].get(tuple(nu), TrigPoly())

    def gamma0(self, k: int) -> TrigPoly:
        return self.Gamma(k, zero_mode(self.d))

    def phi0(self, k: int) -> TrigPoly:
        return self.phi[k].get(zero_mode(self.d), TrigPoly())

    def coefficient(self, k: int, nu, h: str) -> TrigPoly:
        """Coefficient by component name: 'beta', 'B', 'Phi', 'Gamma'."""
        nu = tuple(nu)
        if h == "beta":
            return self.b.get(k, {}).get(nu, TrigPoly())
        if h == "B":
            return self.B.get(k, {}).get(nu, TrigPoly())
        if h == "Phi":
            return self.Phi(k, nu)
        if h == "Gamma":
            return self.Gamma(k, nu)
        raise ValueError(f"unknown component {h!r}")

    def coefficient_table(self, k: int, h: str) -> dict:
        """All stored modes of one component at order k."""
        if h == "beta":
            return self.b.get(k, {})
        if h == "B":
            return self.B.get(k, {})
        if h == "Phi":
            return {nu: self.Phi(k, nu) for nu in set(self.phi.get(k, {})) | set(self.B.get(k, {}))}
        if h == "Gamma":
            return self.gamma.get(k, {})
        raise ValueError(f"unknown component {h!r}")

    def reality_defect(self) -> float:
        """Largest conjugate-mode mismatch, relative to the size of each table."""
        worst = 0.0
        for tabs in (self.b, self.B, self.phi, self.gamma):
            for tab in tabs.values():
                scale = max(table_norm(tab), 1e-300)
                for nu, p in tab.items():
                    other = tab.get(mode_neg(nu), TrigPoly())
                    worst = max(worst, p.conj().distance(other) / scale)
        return worst


class _Recursion:
    """Incremental state for the order-by-order construction."""

    def __init__(self, spec: SystemSpec, two_parameter: bool, delta: complex,
                 divisor_floor: float):
        self.spec = spec
        self.series = SolutionSeries(spec=spec, two_parameter=two_parameter, delta=delta,
                                     divisor_floor=divisor_floor)
        self.powb = PowerTable(spec.d)
        self.powB = PowerTable(spec.d)
        self._deriv: dict = {}
        self.q_max = max([len(bp.coeffs) - 1 for ff in (spec.F, spec.G)
                          for bp in ff.table.values()] + [0])
        self.omega0_derivs = [spec.omega0_derivative(s, delta) for s in range(len(spec.omega0))]

    def _derivative(self, which: str, nu0, p: int, q: int) -> TrigPoly:
        key = (which, nu0, p, q)
        if key not in self._deriv:
            ff = self.spec.F if which == "F" else self.spec.G
            self._deriv[key] = ff.derivative(nu0, p, q, self.series.delta)
        return self._deriv[key]

    def composed(self, k: int) -> tuple:
        """[F]^(k-1) and [G]^(k-1) as mode tables."""
        n = k - 1
        F_out: dict = {}
        G_out: dict = {}
        for p in range(0, n + 1):
            for q in range(0, min(n - p, self.q_max) + 1):
                S: dict = {}
                for j1 in range(p, n - q + 1):
                    left = self.powb.get(p, j1)
                    right = self.powB.get(q, n - j1)
                    if left and right:
                        table_add_into(S, table_mul(left, right))
                if not S:
                    continue
                w = 1.0 / (math.factorial(p) * math.factorial(q))
                for which, out, ff in (("F", F_out, self.spec.F), ("G", G_out, self.spec.G)):
                    for nu0 in ff.modes():
                        dP = self._derivative(which, nu0, p, q)
                        if dP.is_zero():
                            continue
                        for mu in sorted(S):
                            key = mode_add(nu0, mu)
                            term = dP * S[mu] * w
                            out[key] = out[key] + term if key in out else term
        return F_out, G_out

    def nonlinear_frequency(self, k: int) -> dict:
        """[U]^(k): Taylor terms of degree >= 2 of the frequency map."""
        out: dict = {}
        for s in range(2, len(self.omega0_derivs)):
            c = self.omega0_derivs[s]
            if c == 0:
                continue
            table_add_into(out, self.powB.get(s, k), scale=c / math.factorial(s))
        return out

    def advance(self, k: int) -> None:
        ser = self.series
        if k != ser.K + 1:
            raise ValueError(f"orders must be added in sequence (have {ser.K}, asked {k})")
        F_c, G_c = self.composed(k)
        U = self.nonlinear_frequency(k) if k >= 2 else {}
        phi: dict = {}
        table_add_into(phi, U)
        table_add_into(phi, F_c)
        gamma = G_c
        slope = ser.slope
        zero = zero_mode(self.spec.d)
        b_k: dict = {}
        B_k: dict = {}
        for nu in sorted(set(phi) | set(gamma)):
            if nu == zero:
                continue
            div = 1j * self.spec.freq(nu)
            if abs(div) < ser.divisor_floor:
                ser.flagged.append((k, nu, abs(div)))
            g = gamma.get(nu, TrigPoly())
            f = phi.get(nu, TrigPoly())
            B_k[nu] = g / div
            b_k[nu] = (f + B_k[nu] * slope) / div
        if not ser.two_parameter:
            B_k[zero] = -phi.get(zero, TrigPoly()) / slope
        ser.b[k], ser.B[k], ser.phi[k], ser.gamma[k] = b_k, B_k, phi, gamma
        ser.K = k
        self.powb.set_order(k, b_k)
        self.powB.set_order(k, B_k)


def default_divisor_floor(profile) -> float:
    """alpha_{m_N} / 16 for a ScaleProfile of length N."""
    return profile.alpha_m(profile.N) / 16.0


def compute_series(spec: SystemSpec, K: int, *, two_parameter: bool = False,
                   delta: complex = 0.0, divisor_floor: float = 0.0) -> SolutionSeries:
    """Formal solution through order K.

    Parameters
    ----------
    spec : SystemSpec
    K : int
        Highest order.
    two_parameter : bool
        Treat ``B0`` as a free parameter instead of fixing the zero mode of
        ``B`` order by order through the frequency-row bifurcation equation.
    delta : complex
        Expansion point ``B0 - B0bar`` (two-parameter variant only).
    divisor_floor : float
        Divisors ``|omega . nu|`` below this value are recorded in
        ``series.flagged``; the coefficients are still computed.
    """
    if delta != 0 and not two_parameter:
        raise ValueError("a shifted expansion point needs the two-parameter variant")
    rec = _Recursion(spec, two_parameter, delta, divisor_floor)
    for k in range(1, K + 1):
        rec.advance(k)
    return rec.series


def advance_order(spec: SystemSpec, series: SolutionSeries | None, k: int) -> SolutionSeries:
    """Return a new series extended by order ``k`` (orders 1..k-1 must be present)."""
    if series is None or series.K == 0:
        if k != 1:
            raise ValueError("an empty series can only be advanced to order 1")
        return compute_series(spec, 1)
    if k != series.K + 1:
        raise ValueError(f"series has orders up to {series.K}; cannot add order {k}")
    rec = _Recursion(spec, series.two_parameter, series.delta, series.divisor_floor)
    for j in range(1, series.K + 1):
        rec.series.b[j] = series.b[j]
        rec.series.B[j] = series.B[j]
        rec.series.phi[j] = series.phi[j]
        rec.series.gamma[j] = series.gamma[j]
        rec.powb.set_order(j, series.b[j])
        rec.powB.set_order(j, series.B[j])
    rec.series.K = series.K
    rec.series.flagged = list(series.flagged)
    rec.advance(k)
    return rec.series


def range_residuals(series: SolutionSeries) -> float:
    """Largest relative defect of the order-k range equations over all modes."""
    worst = 0.0
    spec = series.spec
    for k in range(1, series.K + 1):
        scale = 1.0 + max(table_norm(series.phi[k]), table_norm(series.gamma[k]))
        for nu in series.modes(k):
            if nu == zero_mode(spec.d):
                continue
            div = 1j * spec.freq(nu)
            r1 = series.b[k][nu] * div - series.phi[k].get(nu, TrigPoly()) - series.B[k][nu] * series.slope
            r2 = series.B[k][nu] * div - series.gamma[k].get(nu, TrigPoly())
            worst = max(worst, r1.coeff_norm() / scale, r2.coeff_norm() / scale)
        if not series.two_parameter:
            r0 = series.Phi(k, zero_mode(spec.d))
            worst = max(worst, r0.coeff_norm() / scale)
    return worst


# ---------------------------------------------------------------------------
# Melnikov analysis
# ---------------------------------------------------------------------------

@dataclass
class MelnikovZero:
    beta: float
    order: int
    leading_derivative: float
    eps_signs: tuple          # signs of epsilon satisfying the sign condition
    odd: bool

    @property
    def satisfies_hypothesis(self) -> bool:
        return self.odd and bool(self.eps_signs)


@dataclass
class MelnikovReport:
    k0: int | None
    gamma_k0: TrigPoly | None
    zeros: list
    all_zero: bool
    slope: float
    tol_zero: float = 0.0
    tol_order: float = 0.0

    def zero_phases(self) -> list:
        return [z.beta for z in self.zeros]


def _real_trig(p: TrigPoly) -> TrigPoly:
    return TrigPoly(0.5 * (p.c + np.conj(p.c[::-1])))


def trig_roots(p: TrigPoly, tol_zero: float, tol_order: float, max_order: int = 12) -> list:
    """Real zeros of a real trigonometric polynomial on [0, 2pi) with multiplicity.

    Candidates come from the unit-circle roots of the associated algebraic
    polynomial and from a dense sampling of |p|; each is refined by bisection
    and Newton on the lowest non-vanishing derivative, then deduplicated.
    """
    p = _real_trig(p.trim(0.0))
    M = p.M
    if M == 0:
        return []
    cands = []
    # algebraic route: z^M p(z) with z = exp(i beta)
    coeffs = p.c[::-1]
    lead = np.flatnonzero(np.abs(coeffs) > 0)
    if lead.size:
        roots = np.roots(coeffs[lead[0]:])
        for z in roots:
            if abs(abs(z) - 1.0) < 1e-3:
                cands.append(float(np.angle(z)) % (2 * np.pi))
    grid = np.linspace(0.0, 2 * np.pi, 256 * (M + 1), endpoint=False)
    vals = np.real(p(grid))
    absv = np.abs(vals)
    for i in range(grid.size):
        j = (i + 1) % grid.size
        if vals[i] == 0.0 or vals[i] * vals[j] < 0:
            cands.append(float(grid[i]))
        h = (i - 1) % grid.size
        if absv[i] <= absv[h] and absv[i] <= absv[j]:
            cands.append(float(grid[i]))
    derivs = [p.deriv(j) for j in range(max_order + 1)]
    step = 2 * np.pi / grid.size

    def real_at(j, x):
        return float(np.real(derivs[j](x)))

    found = []
    for x0 in cands:
        x = x0
        # Newton on the lowest derivative that does not vanish near x
        for _ in range(3):
            n = _multiplicity(derivs, x, tol_order, max_order)
            if n == 0 or n is None:
                break
            g = n - 1
            a, b = x - step, x + step
            fa, fb = real_at(g, a), real_at(g, b)
            if fa * fb < 0:
                for _ in range(60):
                    m = 0.5 * (a + b)
                    fm = real_at(g, m)
                    if fa * fm <= 0:
                        b, fb = m, fm
                    else:
                        a, fa = m, fm
                x = 0.5 * (a + b)
            for _ in range(20):
                dg = real_at(g + 1, x)
                if dg == 0:
                    break
                dx = real_at(g, x) / dg
                x -= dx
                if abs(dx) < 1e-16:
                    break
        x %= 2 * np.pi
        if abs(real_at(0, x)) >= tol_zero:
            continue
        n = _multiplicity(derivs, x, tol_order, max_order)
        if not n:
            continue
        found.append((x, n))
    # near a zero of order n, |p| stays below tol_zero over a radius of
    # (n! tol_zero / |p^(n)|)^(1/n); lower-order hits inside it are spurious
    kept = []
    for x, n in sorted(found, key=lambda r: -r[1]):
        if any(abs((x - y + np.pi) % (2 * np.pi) - np.pi) < r for y, _, r in kept):
            continue
        lead = abs(real_at(n, x))
        r = max(1e-6, (math.factorial(n) * tol_zero / lead) ** (1.0 / n)) if lead else 1e-6
        kept.append((x, n, r))
    out = []
    for x, n, _ in kept:
        if x > 2 * np.pi - 1e-12:
            x = 0.0
        out.append((0.0 if abs(x) < 1e-13 else x, n, real_at(n, x)))
    return sorted(out)


def _multiplicity(derivs, x, tol_order, max_order):
    for j in range(1, max_order + 1):
        if abs(np.real(derivs[j](x))) > tol_order:
            return j
    return None


def melnikov(series: SolutionSeries, zero_tol: float | None = None) -> MelnikovReport:
    """First non-vanishing zero-mode coefficient of the G-row and its zeros."""
    slope = float(np.real(series.slope))
    if zero_tol is None:
        scale = max([table_norm(series.gamma[k]) for k in range(1, series.K + 1)] + [1.0])
        zero_tol = 1e-12 * scale
    for k in range(1, series.K + 1):
        g = series.gamma0(k)
        norm = g.sup_norm()
        if norm > zero_tol:
            tol_zero = 1e-9 * norm
            tol_order = 1e-6 * norm
            zeros = []
            for beta, n, lead in trig_roots(g, tol_zero, tol_order):
                odd = n % 2 == 1
                signs = []
                for s in (1, -1):
                    if (s ** k) * slope * lead > 0:
                        signs.append(s)
                zeros.append(MelnikovZero(beta=beta, order=n, leading_derivative=lead,
                                          eps_signs=tuple(signs), odd=odd))
            return MelnikovReport(k0=k, gamma_k0=g, zeros=zeros, all_zero=False, slope=slope,
                                  tol_zero=tol_zero, tol_order=tol_order)
    return MelnikovReport(k0=None, gamma_k0=None, zeros=[], all_zero=True, slope=slope)


@dataclass
class GradientCheck:
    ok: bool
    mean_defect: float
    potential: TrigPoly


def gradient_structure_check(series: SolutionSeries, k0: int | None = None,
                             tol: float = 1e-12) -> GradientCheck:
    """Check that the first non-vanishing Melnikov function is a beta0-derivative.

    A trigonometric polynomial is a derivative exactly when its mean vanishes;
    the antiderivative with zero mean is returned as ``potential``.
    """
    if k0 is None:
        rep = melnikov(series)
        k0 = rep.k0 if rep.k0 is not None else series.K
    g = series.gamma0(k0)
    defect = abs(g.mean)
    m = np.arange(-g.M, g.M + 1)
    c = np.zeros_like(g.c)
    nz = m != 0
    c[nz] = g.c[nz] / (1j * m[nz])
    scale = max(g.coeff_norm(), 1.0)
    return GradientCheck(ok=defect <= tol * scale, mean_defect=defect, potential=TrigPoly(c))
