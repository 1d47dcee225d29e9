"""System specification and the Fourier-Taylor coefficient algebra.

Every per-order quantity in the package is a finite trigonometric polynomial
in the free phase ``beta0``; forcing functions are tables mapping a lattice
mode to a polynomial in ``B - B0bar`` whose coefficients are such
trigonometric polynomials.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from decimal import Decimal, getcontext
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

Mode = tuple


def l1(nu) -> int:
    """Lattice norm |nu| = sum of absolute entries."""
    return int(sum(abs(int(x)) for x in nu))


def mode_add(a, b) -> tuple:
    return tuple(int(x) + int(y) for x, y in zip(a, b))


def mode_neg(a) -> tuple:
    return tuple(-int(x) for x in a)


def zero_mode(d: int) -> tuple:
    return (0,) * d


class SpecError(ValueError):
    """Invalid model file; ``kind`` names the violated requirement."""

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


# ---------------------------------------------------------------------------
# trigonometric polynomials in beta0
# ---------------------------------------------------------------------------

class TrigPoly:
    """Finite Fourier series ``sum_m c_m exp(i m beta0)``.

    Coefficients are held in a centred complex array of odd length ``2M+1``;
    index ``M + m`` stores ``c_m``.
    """

    __slots__ = ("c",)

    def __init__(self, coeffs=None):
        if coeffs is None:
            c = np.zeros(1, dtype=complex)
        else:
            c = np.asarray(coeffs, dtype=complex).ravel()
            if c.size % 2 == 0:
                raise ValueError("coefficient array must have odd length")
        self.c = c

    # construction -------------------------------------------------------
    @classmethod
    def const(cls, value) -> "TrigPoly":
        return cls(np.array([value], dtype=complex))

    @classmethod
    def from_dict(cls, harmonics: Mapping[int, complex]) -> "TrigPoly":
        if not harmonics:
            return cls()
        M = max(abs(int(m)) for m in harmonics)
        c = np.zeros(2 * M + 1, dtype=complex)
        for m, v in harmonics.items():
            c[M + int(m)] += v
        return cls(c)

    @classmethod
    def sin(cls, m: int = 1) -> "TrigPoly":
        return cls.from_dict({m: -0.5j, -m: 0.5j})

    @classmethod
    def cos(cls, m: int = 1) -> "TrigPoly":
        if m == 0:
            return cls.const(1.0)
        return cls.from_dict({m: 0.5, -m: 0.5})

    # basic properties ---------------------------------------------------
    @property
    def M(self) -> int:
        return (self.c.size - 1) // 2

    def coeff(self, m: int) -> complex:
        M = self.M
        if abs(m) > M:
            return 0j
        return complex(self.c[M + m])

    def as_dict(self, tol: float = 0.0) -> dict:
        M = self.M
        return {m - M: complex(v) for m, v in enumerate(self.c) if abs(v) > tol}

    def padded(self, M: int) -> np.ndarray:
        if M < self.M:
            raise ValueError("cannot pad to a smaller support")
        out = np.zeros(2 * M + 1, dtype=complex)
        out[M - self.M: M + self.M + 1] = self.c
        return out

    def trim(self, tol: float = 0.0) -> "TrigPoly":
        """Drop outer harmonics whose modulus is <= tol."""
        c = self.c
        M = self.M
        k = M
        while k > 0 and abs(c[M - k]) <= tol and abs(c[M + k]) <= tol:
            k -= 1
        return TrigPoly(c[M - k: M + k + 1].copy())

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, TrigPoly):
            other = TrigPoly.const(other)
        M = max(self.M, other.M)
        return TrigPoly(self.padded(M) + other.padded(M))

    __radd__ = __add__

    def __neg__(self):
        return TrigPoly(-self.c)

    def __sub__(self, other):
        if not isinstance(other, TrigPoly):
            other = TrigPoly.const(other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return TrigPoly(np.convolve(self.c, other.c))
        return TrigPoly(self.c * complex(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return TrigPoly(self.c / complex(other))

    def deriv(self, order: int = 1) -> "TrigPoly":
        """d/dbeta0 applied ``order`` times: c_m -> (i m)^order c_m."""
        if order == 0:
            return TrigPoly(self.c.copy())
        m = np.arange(-self.M, self.M + 1)
        return TrigPoly(self.c * (1j * m) ** order)

    def conj(self) -> "TrigPoly":
        """Pointwise complex conjugate for real beta0."""
        return TrigPoly(np.conj(self.c[::-1]))

    def rotate(self, delta: float) -> "TrigPoly":
        """The polynomial beta0 -> p(beta0 + delta)."""
        m = np.arange(-self.M, self.M + 1)
        return TrigPoly(self.c * np.exp(1j * m * delta))

    def __call__(self, beta0):
        beta0 = np.asarray(beta0, dtype=float)
        m = np.arange(-self.M, self.M + 1)
        phase = np.exp(1j * np.multiply.outer(beta0, m))
        return phase @ self.c

    evaluate = __call__

    # norms and comparisons ---------------------------------------------
    @property
    def mean(self) -> complex:
        return self.coeff(0)

    def coeff_norm(self) -> float:
        """Max modulus of the coefficients."""
        return float(np.max(np.abs(self.c))) if self.c.size else 0.0

    def sup_norm(self, samples: int | None = None) -> float:
        """Sup over beta0 of |p(beta0)|, sampled finely enough to be tight."""
        n = samples or max(64, 16 * (self.M + 1))
        grid = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return float(np.max(np.abs(self(grid))))

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.c) <= tol))

    def is_real(self, tol: float = 1e-13) -> bool:
        return bool(np.all(np.abs(self.c - np.conj(self.c[::-1])) <= tol))

    def distance(self, other: "TrigPoly") -> float:
        M = max(self.M, other.M)
        return float(np.max(np.abs(self.padded(M) - other.padded(M))))

    def __repr__(self) -> str:
        terms = ", ".join(f"{m}: {v:.6g}" for m, v in self.as_dict(1e-300).items())
        return f"TrigPoly({{{terms}}})"


ZERO = TrigPoly()


# ---------------------------------------------------------------------------
# polynomials in B with trigonometric coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BPoly:
    """``sum_j coeffs[j] (B - B0bar)^j`` with TrigPoly coefficients."""

    coeffs: tuple = ()

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(c.is_zero(tol) for c in self.coeffs)

    def derivative_at(self, p: int, q: int, delta: complex = 0.0) -> TrigPoly:
        """``d^p_beta d^q_B`` evaluated at ``B = B0bar + delta``."""
        out = TrigPoly()
        for j in range(q, len(self.coeffs)):
            k = j - q
            if k and delta == 0:
                continue
            w = math.factorial(j) / math.factorial(k) * (delta ** k if k else 1)
            out = out + self.coeffs[j] * w
        return out.deriv(p) if p else out

    def d_beta(self) -> "BPoly":
        return BPoly(tuple(c.deriv() for c in self.coeffs))

    def d_B(self) -> "BPoly":
        return BPoly(tuple(self.coeffs[j] * j for j in range(1, len(self.coeffs))))

    def conj(self) -> "BPoly":
        return BPoly(tuple(c.conj() for c in self.coeffs))

    def __neg__(self):
        return BPoly(tuple(-c for c in self.coeffs))

    def __add__(self, other: "BPoly") -> "BPoly":
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [ZERO] * (n - len(self.coeffs))
        b = list(other.coeffs) + [ZERO] * (n - len(other.coeffs))
        return BPoly(tuple(x + y for x, y in zip(a, b)))

    def distance(self, other: "BPoly") -> float:
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [ZERO] * (n - len(self.coeffs))
        b = list(other.coeffs) + [ZERO] * (n - len(other.coeffs))
        return max((x.distance(y) for x, y in zip(a, b)), default=0.0)


@dataclass(frozen=True)
class ForcingField:
    """Map from lattice mode to BPoly; absent modes are zero."""

    table: Mapping = field(default_factory=dict)

    def modes(self) -> list:
        return sorted(self.table)

    def support(self, tol: float = 0.0) -> list:
        return [nu for nu in self.modes() if not self.table[nu].is_zero(tol)]

    def get(self, nu) -> BPoly:
        return self.table.get(tuple(nu), BPoly())

    def derivative(self, nu, p: int, q: int, delta: complex = 0.0) -> TrigPoly:
        bp = self.table.get(tuple(nu))
        if bp is None:
            return TrigPoly()
        return bp.derivative_at(p, q, delta)

    def map(self, fn) -> "ForcingField":
        return ForcingField({nu: fn(bp) for nu, bp in self.table.items()})

    def reality_defect(self) -> float:
        """Largest violation of F_{-nu} = conj(F_nu)."""
        worst = 0.0
        for nu, bp in self.table.items():
            other = self.get(mode_neg(nu))
            worst = max(worst, bp.conj().distance(other))
        return worst

    def distance(self, other: "ForcingField") -> float:
        keys = set(self.table) | set(other.table)
        return max((self.get(k).distance(other.get(k)) for k in keys), default=0.0)


def derive_forcing_from_hamiltonian(f: ForcingField) -> tuple:
    """Return ``(F, G) = (d_B f, -d_beta f)`` computed coefficient-wise."""
    F = f.map(lambda bp: bp.d_B())
    G = f.map(lambda bp: -bp.d_beta())
    return F, G


# ---------------------------------------------------------------------------
# system specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemSpec:
    d: int
    omega: np.ndarray
    B0bar: float
    omega0: np.ndarray
    F: ForcingField
    G: ForcingField
    hamiltonian: ForcingField | None = None
    truncation: Mapping = field(default_factory=dict)
    omega_text: tuple = ()

    @property
    def omega0_prime(self) -> float:
        return float(np.real(self.omega0_derivative(1)))

    def omega0_derivative(self, q: int, delta: complex = 0.0) -> complex:
        """q-th derivative of the frequency map at ``B0bar + delta``."""
        out = 0j
        for j in range(q, len(self.omega0)):
            k = j - q
            if k and delta == 0:
                continue
            out += self.omega0[j] * math.factorial(j) / math.factorial(k) * (delta ** k if k else 1)
        return out

    def omega0_eval(self, B):
        """Frequency map at the physical value ``B``."""
        return np.polynomial.polynomial.polyval(np.asarray(B) - self.B0bar, self.omega0)

    def support(self) -> list:
        """Modes where F or G is nonzero."""
        return sorted(set(self.F.support()) | set(self.G.support()))

    def freq(self, nu) -> float:
        return float(np.dot(self.omega, np.asarray(nu, dtype=float)))

    @property
    def is_hamiltonian(self) -> bool:
        return self.hamiltonian is not None

    def zero_mode(self) -> tuple:
        return zero_mode(self.d)


ANISOCHRONY_TOL = 1e-10
NORMALIZATION_TOL = 1e-12

_SURD = re.compile(
    r"^\(?\s*([+-]?\d+(?:\.\d*)?)\s*(?:([+-])\s*(\d+(?:\.\d*)?)?\s*\*?\s*(?:√|sqrt)\(?\s*(\d+(?:\.\d*)?)\s*\)?)?\s*\)?"
    r"(?:\s*/\s*(\d+(?:\.\d*)?))?\s*$"
)


def parse_real(text) -> float:
    """Parse a decimal string or a quadratic surd ``(p+q√r)/s``.

    Surds are evaluated with 50 significant digits before rounding to the
    working float so the last bits of the frequency are correct.
    """
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip()
    try:
        return float(Decimal(s))
    except Exception:
        pass
    m = _SURD.match(s)
    if not m:
        raise SpecError("parse", f"cannot read number {text!r}")
    getcontext().prec = 50
    p, sign, q, r, den = m.groups()
    val = Decimal(p)
    if r is not None:
        coef = Decimal(q) if q else Decimal(1)
        term = coef * Decimal(r).sqrt()
        val = val + term if sign == "+" else val - term
    if den:
        val = val / Decimal(den)
    return float(val)


def _field_from_records(records, d: int, trunc) -> ForcingField:
    acc: dict = {}
    for rec in records:
        nu = tuple(int(x) for x in rec["nu"])
        if len(nu) != d:
            raise SpecError("parse", f"mode {nu} has wrong dimension")
        m = int(rec["m"])
        coeffs = [complex(float(a), float(b)) for a, b in rec["b_coeffs"]]
        if trunc:
            if l1(nu) > trunc.get("N_modes", 10**9):
                raise SpecError("truncation", f"mode {nu} exceeds N_modes")
            if abs(m) > trunc.get("M_beta", 10**9):
                raise SpecError("truncation", f"harmonic {m} exceeds M_beta")
            if len(coeffs) - 1 > trunc.get("D_B", 10**9):
                raise SpecError("truncation", f"B-degree of {nu},{m} exceeds D_B")
        slot = acc.setdefault(nu, {})
        for j, c in enumerate(coeffs):
            slot.setdefault(j, {})
            slot[j][m] = slot[j].get(m, 0) + c
    table = {}
    for nu, byj in acc.items():
        deg = max(byj)
        table[nu] = BPoly(tuple(TrigPoly.from_dict(byj.get(j, {})) for j in range(deg + 1)))
    return ForcingField(table)


def _field_to_records(ff: ForcingField) -> list:
    out = []
    for nu in ff.modes():
        bp = ff.table[nu]
        harmonics = sorted({m for c in bp.coeffs for m in c.as_dict()})
        for m in harmonics:
            coeffs = [[float(c.coeff(m).real), float(c.coeff(m).imag)] for c in bp.coeffs]
            out.append({"nu": list(nu), "m": m, "b_coeffs": coeffs})
    return out


def spec_from_dict(data: Mapping, validate: bool = True) -> SystemSpec:
    try:
        d = int(data["d"])
        omega_text = tuple(str(x) for x in data["omega"])
        omega = np.array([parse_real(x) for x in omega_text], dtype=float)
        B0bar = float(data.get("B0bar", 0.0))
        omega0 = np.array([float(x) for x in data["omega0_poly"]], dtype=float)
        trunc = dict(data.get("truncation", {}))
    except SpecError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SpecError("parse", f"malformed model file ({exc})") from exc
    if omega.size != d or d < 1:
        raise SpecError("parse", "omega length must equal d >= 1")
    f = _field_from_records(data["f"], d, trunc) if data.get("f") is not None else None
    if f is not None:
        F, G = derive_forcing_from_hamiltonian(f)
        for key, derived in (("F", F), ("G", G)):
            if data.get(key):
                given = _field_from_records(data[key], d, trunc)
                if given.distance(derived) > 0.0:
                    raise SpecError("hamiltonian", f"{key} is not the derivative of f")
    else:
        F = _field_from_records(data.get("F", []), d, trunc)
        G = _field_from_records(data.get("G", []), d, trunc)
    spec = SystemSpec(d=d, omega=omega, B0bar=B0bar, omega0=omega0, F=F, G=G,
                      hamiltonian=f, truncation=trunc, omega_text=omega_text)
    if validate:
        validate_spec(spec)
    return spec


def validate_spec(spec: SystemSpec) -> None:
    if spec.omega0.size == 0 or abs(spec.omega0[0]) > NORMALIZATION_TOL:
        raise SpecError("normalization", "omega0(B0bar) must vanish")
    if spec.omega0.size < 2 or abs(spec.omega0[1]) <= ANISOCHRONY_TOL:
        raise SpecError("anisochrony", "omega0'(B0bar) must be nonzero")
    for name, ff in (("F", spec.F), ("G", spec.G), ("f", spec.hamiltonian)):
        if ff is not None and ff.reality_defect() > 0.0:
            raise SpecError("reality", f"{name}_(-nu) differs from conj({name}_nu)")


def spec_to_dict(spec: SystemSpec) -> dict:
    out = {
        "d": spec.d,
        "omega": list(spec.omega_text) or [repr(float(x)) for x in spec.omega],
        "B0bar": spec.B0bar,
        "omega0_poly": [float(x) for x in spec.omega0],
    }
    if spec.hamiltonian is not None:
        out["f"] = _field_to_records(spec.hamiltonian)
    else:
        out["F"] = _field_to_records(spec.F)
        out["G"] = _field_to_records(spec.G)
    if spec.truncation:
        out["truncation"] = dict(spec.truncation)
    return out


def load_spec(path) -> SystemSpec:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError("parse", str(exc)) from exc
    return spec_from_dict(data)


def save_spec(spec: SystemSpec, path) -> None:
    Path(path).write_text(json.dumps(spec_to_dict(spec), indent=2) + "\n")


# ---------------------------------------------------------------------------
# ready-made models
# ---------------------------------------------------------------------------

GOLDEN_TEXT = "(1+sqrt(5))/2"


def sample_model_dict() -> dict:
    """d=2, omega=(1, golden mean), omega0(B)=B, f=(1+cos a1) cos beta."""
    return {
        "d": 2,
        "omega": ["1", GOLDEN_TEXT],
        "B0bar": 0.0,
        "omega0_poly": [0.0, 1.0],
        "f": [
            {"nu": [0, 0], "m": 1, "b_coeffs": [[0.5, 0.0]]},
            {"nu": [0, 0], "m": -1, "b_coeffs": [[0.5, 0.0]]},
            {"nu": [1, 0], "m": 1, "b_coeffs": [[0.25, 0.0]]},
            {"nu": [1, 0], "m": -1, "b_coeffs": [[0.25, 0.0]]},
            {"nu": [-1, 0], "m": 1, "b_coeffs": [[0.25, 0.0]]},
            {"nu": [-1, 0], "m": -1, "b_coeffs": [[0.25, 0.0]]},
        ],
        "truncation": {"N_modes": 1, "M_beta": 1, "D_B": 0},
    }


def sample_model() -> SystemSpec:
    return spec_from_dict(sample_model_dict())


def random_hamiltonian_dict(seed: int = 0, n_modes: int = 3, M_beta: int = 2,
                            D_B: int = 1, d: int = 2, omega0=(0.0, 1.0),
                            N_modes: int = 2, scale: float = 0.5,
                            include_zero: bool = True) -> dict:
    """Random real Hamiltonian perturbation with ``n_modes`` conjugate pairs.

    The zero mode is added on top of the pairs when ``include_zero`` is set.
    """
    rng = np.random.default_rng(seed)
    modes: list = []
    while len(modes) < n_modes:
        nu = tuple(int(x) for x in rng.integers(-N_modes, N_modes + 1, size=d))
        if l1(nu) == 0 or l1(nu) > N_modes:
            continue
        if nu in modes or mode_neg(nu) in modes:
            continue
        modes.append(nu)
    records = []

    def emit(nu, coeff_by_m):
        for m, cs in sorted(coeff_by_m.items()):
            records.append({"nu": list(nu), "m": m,
                            "b_coeffs": [[float(c.real), float(c.imag)] for c in cs]})

    all_modes = ([zero_mode(d)] if include_zero else []) + modes
    for nu in all_modes:
        table = {}
        for m in range(-M_beta, M_beta + 1):
            cs = scale * (rng.normal(size=D_B + 1) + 1j * rng.normal(size=D_B + 1))
            table[m] = cs
        if nu == zero_mode(d):
            # f_0 must be real: c_{-m} = conj(c_m)
            for m in range(0, M_beta + 1):
                table[-m] = np.conj(table[m])
            table[0] = table[0].real.astype(complex)
            emit(nu, table)
        else:
            emit(nu, table)
            emit(mode_neg(nu), {-m: np.conj(cs) for m, cs in table.items()})
    return {
        "d": d,
        "omega": ["1", GOLDEN_TEXT] if d == 2 else [repr(float(x)) for x in rng.random(d) + 0.5],
        "B0bar": 0.0,
        "omega0_poly": list(omega0),
        "f": records,
        "truncation": {"N_modes": N_modes, "M_beta": M_beta, "D_B": D_B},
    }


def random_hamiltonian(seed: int = 0, **kw) -> SystemSpec:
    return spec_from_dict(random_hamiltonian_dict(seed, **kw))


def _cos_records(nu, m: int, amp: float, b_coeffs=None) -> list:
    """Records for ``amp * cos(nu.alpha) * cos(m beta)`` times a B-polynomial."""
    nu = tuple(nu)
    b = list(b_coeffs) if b_coeffs is not None else [1.0]
    out = []
    ms = [m, -m] if m else [0]
    wm = 0.5 if m else 1.0
    nus = [nu, mode_neg(nu)] if l1(nu) else [nu]
    wn = 0.5 if l1(nu) else 1.0
    for v in nus:
        for mm in ms:
            out.append({"nu": list(v), "m": mm,
                        "b_coeffs": [[amp * wm * wn * c, 0.0] for c in b]})
    return out


def small_divisor_model_dict() -> dict:
    """f = cos(beta) (1 + cos a1 + cos(8 a1 - 5 a2)) with golden omega.

    The mode (8, -5) has |omega . nu| ~ 0.09, so its lines sit on the
    lowest nontrivial scales of the golden profile.
    """
    recs = (_cos_records((0, 0), 1, 1.0) + _cos_records((1, 0), 1, 1.0)
            + _cos_records((8, -5), 1, 1.0))
    return {
        "d": 2, "omega": ["1", GOLDEN_TEXT], "B0bar": 0.0, "omega0_poly": [0.0, 1.0],
        "f": recs, "truncation": {"N_modes": 13, "M_beta": 1, "D_B": 0},
    }


def small_divisor_model() -> SystemSpec:
    return spec_from_dict(small_divisor_model_dict())


def beta_free_model_dict() -> dict:
    """Hamiltonian model whose perturbation does not depend on beta.

    Here G vanishes identically, hence so does every Melnikov coefficient,
    while F still depends on B and on the angles.
    """
    recs = (_cos_records((1, 0), 0, 1.0, [0.0, 1.0, 0.5])
            + _cos_records((0, 1), 0, 0.7, [0.0, 1.0])
            + _cos_records((1, -1), 0, 0.4, [0.0, 0.0, 1.0]))
    return {
        "d": 2, "omega": ["1", GOLDEN_TEXT], "B0bar": 0.0, "omega0_poly": [0.0, 1.0, 0.3],
        "f": recs, "truncation": {"N_modes": 2, "M_beta": 0, "D_B": 2},
    }


def beta_free_model() -> SystemSpec:
    return spec_from_dict(beta_free_model_dict())


def dissipative_control_dict() -> dict:
    """Non-Hamiltonian field: F = cos a1, G = 0.5 (B - B0bar).

    The zero-mode divergence d_beta F + d_B G is 0.5, so the diagonal
    self-energy cancellation of Hamiltonian systems fails at first order.
    """
    return {
        "d": 2, "omega": ["1", GOLDEN_TEXT], "B0bar": 0.0, "omega0_poly": [0.0, 1.0],
        "F": _cos_records((1, 0), 0, 1.0),
        "G": [{"nu": [0, 0], "m": 0, "b_coeffs": [[0.0, 0.0], [0.5, 0.0]]}],
        "truncation": {"N_modes": 1, "M_beta": 0, "D_B": 1},
    }


def dissipative_control() -> SystemSpec:
    return spec_from_dict(dissipative_control_dict())


def second_order_model_dict() -> dict:
    """f = cos(a1) cos(beta): the first Melnikov coefficient vanishes."""
    return {
        "d": 2, "omega": ["1", GOLDEN_TEXT], "B0bar": 0.0, "omega0_poly": [0.0, 1.0],
        "f": _cos_records((1, 0), 1, 1.0),
        "truncation": {"N_modes": 1, "M_beta": 1, "D_B": 0},
    }


def second_order_model() -> SystemSpec:
    return spec_from_dict(second_order_model_dict())
