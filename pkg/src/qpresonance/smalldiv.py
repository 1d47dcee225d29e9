"""Bryuno small-divisor sequences, dyadic scale sequences and C-infinity cutoffs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

RESONANCE_REL = 1e-14
DEFAULT_MAX_EXPONENT = 20
DEFAULT_MAX_PREFIXES = 40_000_000


class ResonanceError(ArithmeticError):
    """omega . nu vanishes (numerically) for some nonzero lattice vector."""

    def __init__(self, nu, value):
        super().__init__(f"resonant frequency: omega.{tuple(nu)} = {value:.3e}")
        self.nu = tuple(int(x) for x in nu)
        self.value = value


class BudgetError(RuntimeError):
    """The requested lattice search exceeds the configured budget."""


def _prefixes(d: int, R: int) -> np.ndarray:
    """All integer (d-1)-vectors with l1 norm <= R, as rows."""
    if d == 1:
        return np.zeros((1, 0), dtype=np.int64)
    r = np.arange(-R, R + 1, dtype=np.int64)
    if d == 2:
        return r[:, None]
    grids = np.meshgrid(*([r] * (d - 1)), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return pts[np.abs(pts).sum(axis=1) <= R]


def alpha_table(omega, n_max: int, max_prefixes: int = DEFAULT_MAX_PREFIXES,
                chunk: int = 1 << 21):
    """alpha_n(omega) for n = 0..n_max and one minimiser per n.

    Every prefix (nu_1..nu_{d-1}) of the l1 ball of radius 2^n_max is
    scanned.  Along the last coordinate |omega . nu| is piecewise linear, so
    for a fixed prefix only the two integers bracketing its real zero can be
    minimal; any other choice of last entry is at least |omega_d| away from
    zero, a value already attained by the unit vector e_d.  Keeping, for each
    prefix, those two candidates together with their l1 norms therefore gives
    the exact minimum over every ball of radius 2^n, n <= n_max.
    """
    omega = np.asarray(omega, dtype=float)
    d = omega.size
    R = 2 ** n_max
    if (2 * R + 1) ** (d - 1) > max_prefixes:
        raise BudgetError(f"lattice search over radius 2^{n_max} in dimension {d} exceeds budget")
    best = np.full(n_max + 1, abs(omega[-1]))
    arg = [tuple([0] * (d - 1) + [1])] * (n_max + 1)
    w = omega[-1]
    pref_all = _prefixes(d, R)
    for lo in range(0, pref_all.shape[0], chunk):
        pref = pref_all[lo: lo + chunk]
        pnorm = np.abs(pref).sum(axis=1)
        partial = pref @ omega[:-1] if d > 1 else np.zeros(pref.shape[0])
        t = -partial / w
        for c in (np.floor(t), np.ceil(t)):
            c = c.astype(np.int64)
            norms = pnorm + np.abs(c)
            keep = (norms > 0) & (norms <= R)
            if not np.any(keep):
                continue
            vals = np.abs(partial + w * c)[keep]
            nrm = norms[keep]
            cc = c[keep]
            pp = pref[keep]
            bad = vals < RESONANCE_REL * (1 + nrm)
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ResonanceError(tuple(pp[i]) + (int(cc[i]),), float(vals[i]))
            level = np.ceil(np.log2(nrm)).astype(np.int64)
            order = np.lexsort((vals, level))
            first = np.r_[True, level[order][1:] != level[order][:-1]]
            for i in order[first]:
                n = int(level[i])
                if vals[i] < best[n]:
                    best[n] = float(vals[i])
                    arg[n] = tuple(int(x) for x in pp[i]) + (int(cc[i]),)
    # alpha_n is a minimum over a nested family of balls
    for n in range(1, n_max + 1):
        if best[n - 1] <= best[n]:
            best[n] = best[n - 1]
            arg[n] = arg[n - 1]
    return best, arg


def min_divisor(omega, R: int, max_prefixes: int = DEFAULT_MAX_PREFIXES):
    """Minimum of |omega . nu| over 0 < |nu| <= R (R a power of two)."""
    n = int(round(np.log2(R)))
    if 2 ** n != R:
        raise ValueError("radius must be a power of two")
    vals, args = alpha_table(omega, n, max_prefixes)
    return float(vals[n]), args[n]


def brute_force_min_divisor(omega, R: int):
    """Reference implementation: scan every lattice point of the l1 ball."""
    omega = np.asarray(omega, dtype=float)
    best = (np.inf, None)
    for nu in itertools.product(range(-R, R + 1), repeat=omega.size):
        n = sum(abs(x) for x in nu)
        if n == 0 or n > R:
            continue
        v = abs(float(np.dot(omega, nu)))
        if v < RESONANCE_REL * (1 + n):
            raise ResonanceError(nu, v)
        if v < best[0]:
            best = (v, nu)
    return best


def alpha_n(omega, n: int, max_exponent: int = DEFAULT_MAX_EXPONENT,
            max_prefixes: int = DEFAULT_MAX_PREFIXES) -> float:
    """alpha_n(omega) = min |omega . nu| over 0 < |nu| <= 2^n."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > max_exponent:
        raise BudgetError(f"2^{n} exceeds the lattice radius budget 2^{max_exponent}")
    return min_divisor(omega, 2 ** n, max_prefixes)[0]


@dataclass(frozen=True)
class ScaleProfile:
    omega: np.ndarray
    alphas: np.ndarray
    m_seq: np.ndarray
    p_seq: np.ndarray
    bryuno_partials: np.ndarray
    minimisers: tuple = field(default=())

    @property
    def N(self) -> int:
        return len(self.m_seq) - 1

    def alpha_m(self, n: int) -> float:
        """alpha_{m_n}; +inf for n = -1."""
        if n < 0:
            return np.inf
        return float(self.alphas[self.m_seq[n]])

    def rows(self):
        """(n, alpha_n, m_n, p_n, bryuno partial) for n = 0..N."""
        for n in range(self.N + 1):
            yield (n, float(self.alphas[n]), int(self.m_seq[n]), int(self.p_seq[n]),
                   float(self.bryuno_partials[n]))


def build_profile(omega, N_profile: int = 8, max_exponent: int = DEFAULT_MAX_EXPONENT,
                  max_prefixes: int = DEFAULT_MAX_PREFIXES) -> ScaleProfile:
    """Alpha table, scale sequences m_n, p_n and Bryuno partial sums."""
    omega = np.asarray(omega, dtype=float)
    table = {"E": -1, "vals": None, "args": None}

    def alpha(j):
        if j > table["E"]:
            E = max(j, N_profile, table["E"] + 4)
            E = min(E, max_exponent)
            if j > E:
                raise BudgetError(f"alpha_{j} needs lattice radius 2^{j} > 2^{max_exponent}")
            table["vals"], table["args"] = alpha_table(omega, E, max_prefixes)
            table["E"] = E
        return float(table["vals"][j])

    m_seq = [0]
    p_seq = []
    for n in range(N_profile + 1):
        m = m_seq[n]
        q = 0
        while alpha(m) < 2 * alpha(m + q + 1):
            q += 1
        p_seq.append(q)
        m_seq.append(m + q + 1)
    m_seq = m_seq[: N_profile + 1]
    alphas = list(table["vals"])
    mins = list(table["args"])
    a = np.array(alphas)
    terms = 2.0 ** -np.arange(N_profile + 1) * np.log(1.0 / a[: N_profile + 1])
    return ScaleProfile(omega=omega, alphas=a, m_seq=np.array(m_seq, dtype=int),
                        p_seq=np.array(p_seq, dtype=int),
                        bryuno_partials=np.cumsum(terms), minimisers=tuple(mins))


# ---------------------------------------------------------------------------
# cutoff family
# ---------------------------------------------------------------------------

def _g(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _g_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def _bump(y):
    """1 for y <= 1/2, 0 for y >= 1, smooth monotone in between (y >= 0)."""
    a = _g(2.0 - 2.0 * y)
    b = _g(2.0 * y - 1.0)
    return a / (a + b)


def _bump_prime(y):
    a = _g(2.0 - 2.0 * y)
    b = _g(2.0 * y - 1.0)
    da = -2.0 * _g_prime(2.0 - 2.0 * y)
    db = 2.0 * _g_prime(2.0 * y - 1.0)
    return (da * b - a * db) / (a + b) ** 2


def chi(x):
    """Even C-infinity cutoff: 1 on |x| <= 1/2, 0 on |x| >= 1."""
    x = np.asarray(x, dtype=float)
    return _bump(np.abs(x))


def chi_prime(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * _bump_prime(np.abs(x))


def xi(x):
    """One-sided cutoff: 1 for x <= 1/2, 0 for x >= 1, non-increasing."""
    x = np.asarray(x, dtype=float)
    return _bump(np.maximum(x, 0.0))


class Cutoffs:
    """The scaled family chi_n, psi_n, Psi_n, xi_n built on a ScaleProfile.

    chi_{-1} and xi_{-1} are identically 1.  All functions accept arrays.
    """

    def __init__(self, profile: ScaleProfile):
        self.profile = profile
        self.N = profile.N
        self._active: dict = {}

    def _scale(self, n):
        return 8.0 / self.profile.alpha_m(n)

    def chi(self, n: int, x):
        x = np.asarray(x, dtype=float)
        if n < 0:
            return np.ones_like(x)
        return chi(self._scale(n) * x)

    def chi_prime(self, n: int, x):
        x = np.asarray(x, dtype=float)
        if n < 0:
            return np.zeros_like(x)
        s = self._scale(n)
        return s * chi_prime(s * x)

    def psi(self, n: int, x):
        return 1.0 - self.chi(n, x)

    def Psi(self, n: int, x):
        """chi_{n-1}(x) psi_n(x); Psi_0 = psi_0."""
        return self.chi(n - 1, x) * self.psi(n, x)

    def Psi_prime(self, n: int, x):
        return (self.chi_prime(n - 1, x) * self.psi(n, x)
                - self.chi(n - 1, x) * self.chi_prime(n, x))

    def xi(self, n: int, x):
        x = np.asarray(x, dtype=float)
        if n < 0:
            return np.ones_like(x)
        if n + 1 > self.N:
            raise IndexError("xi_n needs alpha_{m_{n+1}}; extend the profile")
        return xi(2.0 ** 8 * x / self.profile.alpha_m(n + 1) ** 2)

    def partition(self, p: int, x, n_max: int | None = None):
        """psi_p(x) + sum_{p<n<=n_max} Psi_n(x)."""
        n_max = self.N if n_max is None else n_max
        total = self.psi(p, x)
        for n in range(p + 1, n_max + 1):
            total = total + self.Psi(n, x)
        return total

    def active_scales(self, x, n_max: int | None = None) -> list:
        """Scales n >= 0 with Psi_n(x) != 0."""
        n_max = self.N if n_max is None else n_max
        key = (float(x), n_max)
        if key not in self._active:
            self._active[key] = [n for n in range(n_max + 1) if float(self.Psi(n, x)) != 0.0]
        return list(self._active[key])

    def support_interval(self, n: int) -> tuple:
        """Open interval of |x| outside of which Psi_n vanishes."""
        lo = self.profile.alpha_m(n) / 16.0
        hi = self.profile.alpha_m(n - 1) / 8.0
        return lo, hi

    def scale_sum(self, n: int, x):
        """sum_{j=0}^{n} Psi_j(x) = 1 - chi_n(x)."""
        total = np.zeros_like(np.asarray(x, dtype=float))
        for j in range(n + 1):
            total = total + self.Psi(j, x)
        return total
