"""Self-energy matrices, resummed propagators and their structural identities.

Matrices are indexed ``M[u, e]`` with ``u`` the component of the exiting line
and ``e`` that of the entering line (0 = beta, 1 = B).  Every x-dependent
quantity is carried together with its exact x-derivative.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .model import SystemSpec, TrigPoly, zero_mode
from .smalldiv import Cutoffs, ScaleProfile
from .trees import (BEE, BETA, COMPONENTS, GENERAL, HAMILTONIAN, LabelledTree,
                    TreeEnumerator, detect_subgraphs)

IDX = {BETA: 0, BEE: 1}
SINGULAR_FRACTION = 0.25


class SingularPropagatorError(ArithmeticError):
    def __init__(self, n, x, det):
        super().__init__(f"singular propagator at scale {n}, x={x:.3e}: det={det:.3e}")
        self.n, self.x, self.det = n, x, det


# ---------------------------------------------------------------------------
# lowest scale
# ---------------------------------------------------------------------------

def m_minus1(spec: SystemSpec, eps, beta0, B0) -> np.ndarray:
    """Self-energy on the lowest scale; it does not depend on x."""
    z = zero_mode(spec.d)
    delta = B0 - spec.B0bar

    def at(field, p, q):
        return complex(field.derivative(z, p, q, delta)(beta0))

    return np.array([
        [eps * at(spec.F, 1, 0), spec.omega0_derivative(1, delta) + eps * at(spec.F, 0, 1)],
        [eps * at(spec.G, 1, 0), eps * at(spec.G, 0, 1)],
    ], dtype=complex)


@dataclass
class SEMatrix:
    """A 2x2 self-energy together with its x-derivative and provenance."""

    value: np.ndarray
    derivative: np.ndarray
    scale: int
    k_max: int
    x: float
    eps: complex
    beta0: float
    B0: complex

    def real_defect(self) -> float:
        """Size of the imaginary part of the value (meaningful at x = 0)."""
        return float(np.max(np.abs(self.value.imag)))

    def imaginary_defect(self) -> float:
        """Size of the real part of the x-derivative (meaningful at x = 0)."""
        return float(np.max(np.abs(self.derivative.real)))


# ---------------------------------------------------------------------------
# numeric self-energy graphs
# ---------------------------------------------------------------------------

@dataclass
class _Graph:
    u: int
    e: int
    k: int
    coeff: complex
    y0: np.ndarray
    path: np.ndarray
    el: np.ndarray
    ul: np.ndarray
    nodes: np.ndarray     # tree node leaving each line
    tree: LabelledTree


def _numeric_graphs(spec, framework, renormalised, k_max, eps, beta0, delta) -> list:
    en = TreeEnumerator(spec, framework, renormalised=renormalised, delta=delta)
    zero = zero_mode(spec.d)
    slope = spec.omega0_derivative(1, delta)
    out = []
    for u in COMPONENTS:
        for e in COMPONENTS:
            for k in range(0, k_max + 1):
                for tree in en.self_energy_graphs(k, u, e):
                    c = complex(tree.sym) * eps ** k
                    y0, path, el, ul, idx = [], [], [], [], []
                    for v, node in enumerate(tree.nodes):
                        c *= complex(en.factor(node.kind, node.nu, node.p, node.q)(beta0))
                        if v == 0:
                            continue
                        if node.momentum == zero and not node.on_path:
                            c *= -1.0 / slope   # zero-momentum B line, lowest scale
                            continue
                        y0.append(spec.freq(node.momentum))
                        path.append(node.on_path)
                        el.append(IDX[node.line])
                        ul.append(IDX[node.h])
                        idx.append(v)
                    if c == 0:
                        continue
                    out.append(_Graph(IDX[u], IDX[e], k, c, np.array(y0), np.array(path, bool),
                                      np.array(el, int), np.array(ul, int), np.array(idx, int),
                                      tree))
    return out


def _prod_with_derivative(vals: np.ndarray, ders: np.ndarray) -> tuple:
    """Product of the entries and its derivative (product rule)."""
    if vals.size == 0:
        return 1.0 + 0j, 0j
    total = np.prod(vals)
    d = 0j
    for i in range(vals.size):
        if ders[i] != 0:
            d += ders[i] * np.prod(np.delete(vals, i))
    return total, d


# ---------------------------------------------------------------------------
# the self-energy engine
# ---------------------------------------------------------------------------

class SelfEnergy:
    """Self-energies M^[q](x), accumulated sums and propagators at fixed parameters.

    Parameters
    ----------
    spec, profile
        Model and scale profile.
    eps, beta0, B0
        Perturbation size and the expansion point.  For the Hamiltonian
        framework B0 must equal the unperturbed value.
    k_max
        Largest order of the self-energy graphs included.
    framework : {'general', 'hamiltonian'}
    renormalised : bool
        General framework only.  ``False``: every self-energy graph, scalar
        cutoff propagators (the plain expansion).  ``True``: graphs free of
        lowest-scale nodes, evaluated with the matrix propagators of the
        lower scales and kept only for scale assignments without inner
        self-energy clusters.
    regularise : callable or None
        ``regularise(n)`` returns the factor multiplying the accumulated
        self-energy inside the scale-n propagator.
    """

    def __init__(self, spec: SystemSpec, profile: ScaleProfile, eps, beta0, B0=None, *,
                 k_max: int = 3, framework: str = GENERAL, renormalised: bool = False,
                 regularise=None):
        self.spec = spec
        self.profile = profile
        self.cut = Cutoffs(profile)
        self.eps = eps
        self.beta0 = beta0
        self.B0 = spec.B0bar if B0 is None else B0
        self.delta = self.B0 - spec.B0bar
        if framework == HAMILTONIAN and self.delta != 0:
            raise ValueError("the Hamiltonian expansion is taken at the unperturbed B0")
        self.k_max = k_max
        self.framework = framework
        self.renormalised = renormalised
        self.regularise = regularise
        self.graphs = _numeric_graphs(spec, framework, renormalised, k_max, eps, beta0,
                                      self.delta)
        self.lowest = m_minus1(spec, eps, beta0, self.B0)
        if not renormalised:
            self.lowest = np.zeros((2, 2), complex)
            for g in self.graphs:
                if g.y0.size == 0:
                    self.lowest[g.u, g.e] += g.coeff
        self.flags: list = []
        self._M: dict = {}
        self._acc: dict = {}
        self._G: dict = {}

    # -- scalar cutoff pieces -------------------------------------------------
    def _chi(self, q, y):
        return float(self.cut.chi(q, y)), float(self.cut.chi_prime(q, y))

    def _cumulative(self, q, y):
        """Scale-summed scalar propagator up to scale q: (1 - chi_q(y))/(iy)."""
        if q < 0:
            return 0j, 0j
        c, dc = self._chi(q, y)
        val = (1.0 - c) / (1j * y)
        der = -dc / (1j * y) - (1.0 - c) / (1j * y * y)
        return val, der

    # -- M^[q](x) ---------------------------------------------------------------
    def M(self, q: int, x: float) -> tuple:
        """Self-energy on scale q at x: (value, x-derivative)."""
        key = (q, float(x))
        if key in self._M:
            return self._M[key]
        if q < 0:
            res = (self.lowest.copy(), np.zeros((2, 2), complex))
        elif self.renormalised:
            res = self._M_renormalised(q, x)
        else:
            res = self._M_plain(q, x)
        self._M[key] = res
        return res

    def _M_plain(self, q, x):
        val = np.zeros((2, 2), complex)
        der = np.zeros((2, 2), complex)
        for g in self.graphs:
            if g.y0.size == 0:
                continue
            y = g.y0 + np.where(g.path, x, 0.0)
            parts = []
            for level in (q, q - 1):
                vs = np.empty(y.size, complex)
                ds = np.empty(y.size, complex)
                for i, yi in enumerate(y):
                    v, d = self._cumulative(level, yi)
                    vs[i], ds[i] = v, (d if g.path[i] else 0j)
                parts.append(_prod_with_derivative(vs, ds))
            val[g.u, g.e] += g.coeff * (parts[0][0] - parts[1][0])
            der[g.u, g.e] += g.coeff * (parts[0][1] - parts[1][1])
        return val, der

    def _M_renormalised(self, q, x):
        val = np.zeros((2, 2), complex)
        der = np.zeros((2, 2), complex)
        for g in self.graphs:
            if g.y0.size == 0:
                continue
            y = g.y0 + np.where(g.path, x, 0.0)
            opts = [[n for n in self.cut.active_scales(yi) if n <= q] for yi in y]
            if any(not o for o in opts):
                continue
            for combo in itertools.product(*opts):
                if max(combo) != q or self._has_inner_cluster(g, combo):
                    continue
                vs = np.empty(y.size, complex)
                ds = np.empty(y.size, complex)
                for i, (yi, n) in enumerate(zip(y, combo)):
                    Gv, Gd = self.propagator_matrix(n, yi)
                    vs[i] = Gv[g.el[i], g.ul[i]]
                    ds[i] = Gd[g.el[i], g.ul[i]] if g.path[i] else 0j
                v, d = _prod_with_derivative(vs, ds)
                val[g.u, g.e] += g.coeff * v
                der[g.u, g.e] += g.coeff * d
        return val, der

    def _has_inner_cluster(self, g: _Graph, combo) -> bool:
        """Whether the assignment creates a self-energy cluster inside the graph."""
        tree = g.tree
        scales = [10 ** 6] * tree.n_nodes     # external lines sit above everything
        for v, n in zip(g.nodes, combo):
            scales[v] = n
        rep = detect_subgraphs(_with_stub_child(tree), scales + [10 ** 6])
        return any(len(T.nodes) < tree.n_nodes for T in rep.self_energy_clusters
                   if tree.n_nodes not in T.nodes)

    # -- accumulated self-energy and propagators --------------------------------
    def accumulated(self, n: int, x: float) -> tuple:
        """sum_{q=-1}^{n} chi_q(x) M^[q](x) with its x-derivative."""
        key = (n, float(x))
        if key in self._acc:
            return self._acc[key]
        val = np.zeros((2, 2), complex)
        der = np.zeros((2, 2), complex)
        for q in range(-1, n + 1):
            if q < 0:
                c, dc = 1.0, 0.0
            else:
                c, dc = self._chi(q, x)
            if c == 0.0 and dc == 0.0:
                continue
            Mv, Md = self.M(q, x)
            val += c * Mv
            der += dc * Mv + c * Md
        self._acc[key] = (val, der)
        return val, der

    def propagator_matrix(self, n: int, x: float) -> tuple:
        """Psi_n(x) ((ix) 1 - xi * accumulated_{n-1}(x))^{-1} and its derivative."""
        key = (n, float(x))
        if key in self._G:
            return self._G[key]
        psi = float(self.cut.Psi(n, x))
        dpsi = float(self.cut.Psi_prime(n, x))
        if psi == 0.0 and dpsi == 0.0:
            res = (np.zeros((2, 2), complex), np.zeros((2, 2), complex))
            self._G[key] = res
            return res
        Mv, Md = self.accumulated(n - 1, x)
        factor = self.regularise(n - 1) if self.regularise is not None else 1.0
        A = 1j * x * np.eye(2) - factor * Mv
        dA = 1j * np.eye(2) - factor * Md
        det = np.linalg.det(A)
        if det == 0 or not np.isfinite(det):
            raise SingularPropagatorError(n, x, complex(det))
        if abs(det) < SINGULAR_FRACTION * x * x:
            self.flags.append((n, float(x), complex(det)))
        Ainv = np.linalg.inv(A)
        res = (psi * Ainv, dpsi * Ainv - psi * Ainv @ dA @ Ainv)
        self._G[key] = res
        return res

    def matrix(self, n: int, x: float) -> SEMatrix:
        val, der = self.accumulated(n, x)
        return SEMatrix(val, der, n, self.k_max, x, self.eps, self.beta0, self.B0)


def _with_stub_child(tree: LabelledTree) -> LabelledTree:
    """Copy of a self-energy graph with the stub made into an explicit leaf.

    The leaf has mode zero and index ``n_nodes``, so the cluster finder sees
    the entering line.
    """
    from .trees import Node

    nodes = list(tree.nodes)
    children = [list(c) for c in tree.children]
    parent = tree.stub_parent
    nodes.append(Node(zero_mode(len(nodes[0].nu)), "", 0, "", 0, 0, parent, tree.stub_label,
                      zero_mode(len(nodes[0].nu)), False, nodes[parent].depth + 1))
    children.append([])
    children[parent].append(len(nodes) - 1)
    return LabelledTree(tree.framework, nodes, tree.sym, tree.code, -1, "", children)


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def self_energy(spec: SystemSpec, profile: ScaleProfile, n: int, x: float, eps, beta0,
                B0=None, *, k_max: int = 3, framework: str = GENERAL,
                renormalised: bool = False) -> tuple:
    """(M^[n](x), accumulated self-energy up to scale n at x) as SEMatrix pair."""
    eng = SelfEnergy(spec, profile, eps, beta0, B0, k_max=k_max, framework=framework,
                     renormalised=renormalised)
    Mv, Md = eng.M(n, x)
    return (SEMatrix(Mv, Md, n, k_max, x, eps, beta0, eng.B0), eng.matrix(n, x))


def propagator(spec: SystemSpec, profile: ScaleProfile, n: int, x: float, eps, beta0,
               B0=None, *, k_max: int = 3, renormalised: bool = True,
               regularised: bool = False, B0_prime: float = 0.0, k0: int | None = None,
               series=None) -> np.ndarray:
    """Scale-n propagator at x; the regularised variant fixes B0 through B0'."""
    if regularised:
        reg = RegularisedSelfEnergy(spec, profile, eps, beta0, B0_prime, k_max=k_max,
                                    k0=k0, series=series)
        return reg.engine.propagator_matrix(n, x)[0]
    eng = SelfEnergy(spec, profile, eps, beta0, B0, k_max=k_max, renormalised=renormalised)
    return eng.propagator_matrix(n, x)[0]


# ---------------------------------------------------------------------------
# regularisation
# ---------------------------------------------------------------------------

def reparametrised_B0(spec, series, eps, beta0, k0: int, B0_prime) -> complex:
    """B0bar + sum_{h<k0} eps^h B^(h)_0(beta0) + eps^k0 B0'."""
    z = zero_mode(spec.d)
    out = spec.B0bar + eps ** k0 * B0_prime
    for h in range(1, k0):
        out += eps ** h * complex(series.B[h].get(z, TrigPoly())(beta0))
    return out


class RegularisedSelfEnergy:
    """Self-energies with the determinant cutoff inserted into every propagator.

    The low-order part of the determinant is removed by its Taylor jet in
    eps at fixed (beta0, B0').  The jet is read off from evaluations on a
    small circle of complex eps, where the cutoff is identically one.
    """

    def __init__(self, spec, profile, eps, beta0, B0_prime=0.0, *, k_max: int = 3,
                 k0: int | None = None, series=None, n_fft: int = 16, radius: float | None = None):
        from .lindstedt import compute_series, melnikov

        self.spec, self.profile = spec, profile
        self.eps, self.beta0, self.B0_prime = eps, beta0, B0_prime
        self.k_max = k_max
        if series is None:
            series = compute_series(spec, max(k_max, 2))
        if k0 is None:
            k0 = melnikov(series).k0 or 1
        self.k0 = k0
        self.series = series
        self.n_fft = n_fft
        self.radius = radius if radius is not None else min(max(abs(eps), 1e-4), 1e-2)
        self.cut = Cutoffs(profile)
        self._delta: dict = {}
        B0 = reparametrised_B0(spec, series, eps, beta0, k0, B0_prime)
        self.engine = SelfEnergy(spec, profile, eps, beta0, B0, k_max=k_max,
                                 renormalised=True, regularise=self.xi_factor)
        self._circle: dict = {}
        self._jet: dict = {}

    def _circle_jet(self, n: int, radius: float) -> np.ndarray:
        pts = radius * np.exp(2j * np.pi * np.arange(self.n_fft) / self.n_fft)
        vals = []
        for e in pts:
            key = (radius, complex(e))
            if key not in self._circle:
                B0 = reparametrised_B0(self.spec, self.series, e, self.beta0, self.k0,
                                       self.B0_prime)
                self._circle[key] = SelfEnergy(self.spec, self.profile, e, self.beta0, B0,
                                               k_max=self.k_max, renormalised=True)
            vals.append(np.linalg.det(self._circle[key].accumulated(n, 0.0)[0]))
        coef = np.fft.fft(np.array(vals)) / self.n_fft
        return np.array([coef[k] / radius ** k for k in range(self.k0)])

    def determinant(self, n: int) -> float:
        """det of the accumulated (regularised) self-energy at x = 0."""
        return complex(np.linalg.det(self.engine.accumulated(n, 0.0)[0]))

    def determinant_jet(self, n: int) -> np.ndarray:
        """Taylor coefficients 0..k0-1 in eps of the unregularised determinant.

        Resummed propagators have poles at small complex eps when divisors
        are small, so the sampling radius shrinks until two radii agree.
        """
        if n in self._jet:
            return self._jet[n]
        r = self.radius
        prev = self._circle_jet(n, r)
        for _ in range(12):
            r /= 8.0
            cur = self._circle_jet(n, r)
            scale = np.abs(cur * r ** np.arange(self.k0)).max() + r ** self.k0
            if np.all(np.abs(cur - prev) * r ** np.arange(self.k0) <= 1e-8 * scale):
                self._jet[n] = cur
                return cur
            prev = cur
        raise ArithmeticError("determinant jet did not converge; reduce the radius")

    def Delta(self, n: int) -> float:
        if n not in self._delta:
            jet = self.determinant_jet(n)
            low = sum(jet[k] * self.eps ** k for k in range(self.k0))
            self._delta[n] = complex(self.determinant(n) - low)
        return self._delta[n]

    def xi_factor(self, n: int) -> float:
        if n < 0:
            return 1.0
        if n + 1 > self.profile.N:
            raise IndexError("profile too short for the regularisation cutoff")
        return float(self.cut.xi(n, self.Delta(n).real))


# ---------------------------------------------------------------------------
# x-jets at x = 0 as functions of beta0
# ---------------------------------------------------------------------------

def self_energy_jets(spec: SystemSpec, k_max: int, *, framework: str = HAMILTONIAN,
                     delta: complex = 0.0, order: int = 1) -> dict:
    """Scale-summed self-energy Taylor coefficients in x at x = 0.

    Returns ``{k: array (2, 2, order+1) of TrigPoly}``; entry ``[u, e, j]``
    is the x^j coefficient of the order-k self-energy as a function of beta0.
    Every self-energy graph is included (the non-renormalised expansion).
    """
    en = TreeEnumerator(spec, framework, delta=delta)
    out = {}
    for k in range(0, k_max + 1):
        arr = np.empty((2, 2, order + 1), dtype=object)
        for u in COMPONENTS:
            for e in COMPONENTS:
                acc = [TrigPoly() for _ in range(order + 1)]
                for tree in en.self_energy_graphs(k, u, e):
                    jet = en.value_jet(tree, order)
                    acc = [a + b for a, b in zip(acc, jet)]
                for j in range(order + 1):
                    arr[IDX[u], IDX[e], j] = acc[j]
        out[k] = arr
    return out


def _tp_scale(*polys) -> float:
    return max([p.coeff_norm() for p in polys] + [1.0])


# ---------------------------------------------------------------------------
# identities
# ---------------------------------------------------------------------------

@dataclass
class IdentityReport:
    defects: dict
    precondition: bool
    k_max: int
    notes: list = field(default_factory=list)

    def ok(self, tol: float = 1e-11) -> bool:
        return self.precondition and all(v < tol for v in self.defects.values())


def identity_suite(spec: SystemSpec, series=None, k_max: int = 2, *,
                   zero_tol: float = 1e-12) -> IdentityReport:
    """Hamiltonian self-energy identities at x = 0, order by order.

    ``gamma_chain`` / ``phi_chain``: the beta0-derivative of the Melnikov
    (resp. frequency) coefficient equals the exiting-B (resp. exiting-beta)
    column sum with the B0-chain term.  ``trace``: the diagonal entries are
    opposite.  ``offdiag_slope``: off-diagonal x-derivatives vanish.
    ``diag_slope``: diagonal x-derivatives agree.  The last three are
    meaningful only when every Melnikov coefficient vanishes, which is the
    precondition reported.
    """
    from .lindstedt import compute_series

    if series is None:
        series = compute_series(spec, k_max)
    z = zero_mode(spec.d)
    jets = self_energy_jets(spec, k_max, framework=HAMILTONIAN)
    scale = max([series.gamma0(k).coeff_norm() for k in range(1, k_max + 1)] + [1.0])
    precondition = all(series.gamma0(k).coeff_norm() <= zero_tol * scale
                       for k in range(1, k_max + 1))
    B0 = {k: series.B[k].get(z, TrigPoly()) for k in range(1, k_max + 1)}
    b, B = IDX[BETA], IDX[BEE]
    d = {"gamma_chain": 0.0, "phi_chain": 0.0, "trace": 0.0,
         "offdiag_slope": 0.0, "diag_slope": 0.0}
    for k in range(1, k_max + 1):
        M = jets
        rhs_g = M[k][B, b, 0]
        rhs_p = M[k][b, b, 0]
        for k2 in range(1, k + 1):
            dB = B0[k2].deriv()
            rhs_g = rhs_g + M[k - k2][B, B, 0] * dB
            rhs_p = rhs_p + M[k - k2][b, B, 0] * dB
        lhs_g = series.gamma0(k).deriv()
        lhs_p = series.Phi(k, z).deriv()
        d["gamma_chain"] = max(d["gamma_chain"], lhs_g.distance(rhs_g) / _tp_scale(lhs_g, rhs_g))
        d["phi_chain"] = max(d["phi_chain"], lhs_p.distance(rhs_p) / _tp_scale(lhs_p, rhs_p))
        tr = M[k][b, b, 0] + M[k][B, B, 0]
        d["trace"] = max(d["trace"], tr.coeff_norm() / _tp_scale(M[k][b, b, 0], M[k][B, B, 0]))
        off = max(M[k][B, b, 1].coeff_norm(), M[k][b, B, 1].coeff_norm())
        d["offdiag_slope"] = max(d["offdiag_slope"],
                                 off / _tp_scale(M[k][B, b, 1], M[k][b, B, 1], M[k][b, b, 1]))
        dd = M[k][b, b, 1].distance(M[k][B, B, 1])
        d["diag_slope"] = max(d["diag_slope"], dd / _tp_scale(M[k][b, b, 1], M[k][B, B, 1]))
    notes = [] if precondition else ["Melnikov coefficients do not vanish; only the chain "
                                     "identities are meaningful"]
    return IdentityReport(d, precondition, k_max, notes)


def _delta_taylor(fn, n_terms: int, radius: float = 0.5, n_fft: int = 16) -> list:
    """Taylor coefficients in delta of a TrigPoly-valued polynomial function.

    ``fn(delta)`` may return nested lists / arrays of TrigPoly; the output
    has the same structure with a list of coefficients at every leaf.
    """
    pts = radius * np.exp(2j * np.pi * np.arange(n_fft) / n_fft)
    samples = [fn(p) for p in pts]

    def combine(items):
        first = items[0]
        if isinstance(first, TrigPoly):
            M = max(p.M for p in items)
            arr = np.array([p.padded(M) for p in items])
            coef = np.fft.fft(arr, axis=0) / n_fft
            return [TrigPoly(coef[j] / radius ** j).trim(0.0) for j in range(n_terms)]
        if isinstance(first, np.ndarray):
            out = np.empty(first.shape, dtype=object)
            for idx in np.ndindex(first.shape):
                out[idx] = combine([it[idx] for it in items])
            return out
        return [combine([it[i] for it in items]) for i in range(len(first))]

    return combine(samples)


def jacobian_identity(spec: SystemSpec, k_max: int, delta: float = 0.0) -> dict:
    """Self-energy at x = 0 against the Jacobian of the bifurcation functions.

    The two-parameter coefficients Phi^(k)_0, Gamma^(k)_0 are differentiated
    in beta0 exactly and in B0 through their Taylor expansion in delta; the
    self-energy side sums every plain self-energy graph.  Returns per-order
    defects relative to the size of the order-k matrix.
    """
    from .lindstedt import compute_series

    z = zero_mode(spec.d)
    jets = self_energy_jets(spec, k_max, framework=GENERAL, delta=delta, order=0)

    def bif(dl):
        s = compute_series(spec, k_max, two_parameter=True, delta=delta + dl)
        return [[s.Phi(k, z), s.Gamma(k, z) if k else TrigPoly()] for k in range(k_max + 1)]

    taylor = _delta_taylor(bif, 2)
    defects = {}
    for k in range(0, k_max + 1):
        phi, gam = taylor[k]
        J = [[phi[0].deriv(), phi[1]], [gam[0].deriv(), gam[1]]]
        Mk = jets[k]
        sc = _tp_scale(*[J[i][j] for i in range(2) for j in range(2)],
                       *[Mk[i, j, 0] for i in range(2) for j in range(2)])
        defects[k] = max(J[i][j].distance(Mk[i, j, 0]) for i in range(2) for j in range(2)) / sc
    return defects


def _series_mul(a: list, b: list, n: int) -> list:
    out = [TrigPoly() for _ in range(n)]
    for i in range(min(n, len(a))):
        for j in range(min(n - i, len(b))):
            out[i + j] = out[i + j] + a[i] * b[j]
    return out


def determinant_jet(spec: SystemSpec, k0: int | None = None, series=None) -> list:
    """Low-order coefficients of det of the self-energy along B0(eps, beta0).

    B0 follows its own expansion through order k0-1; the returned list holds
    the sup norms of the eps^k coefficients, k < k0, all of which vanish.
    """
    from .lindstedt import compute_series, melnikov

    if series is None:
        series = compute_series(spec, max(k0 or 1, 2) + 1)
    if k0 is None:
        k0 = melnikov(series).k0 or 1
    z = zero_mode(spec.d)
    n = k0

    def se(dl):
        jets = self_energy_jets(spec, n - 1, framework=GENERAL, delta=dl, order=0)
        return [jets[k][:, :, 0] for k in range(n)]

    taylor = _delta_taylor(se, n)          # taylor[k][u, e][j]: eps^k delta^j coefficient
    shift = [TrigPoly()] + [series.B[h].get(z, TrigPoly()) for h in range(1, n)]
    powers = [[TrigPoly.const(1.0)] + [TrigPoly()] * (n - 1)]
    for j in range(1, n):
        powers.append(_series_mul(powers[-1], shift, n))
    entry = {}
    for u in range(2):
        for e in range(2):
            acc = [TrigPoly() for _ in range(n)]
            for k in range(n):
                for j in range(n):
                    term = [TrigPoly()] * k + [c * 1.0 for c in powers[j]]
                    coef = taylor[k][u, e][j]
                    for i in range(n):
                        if i < len(term):
                            acc[i] = acc[i] + term[i] * coef
            entry[(u, e)] = acc
    det = [a - b for a, b in zip(_series_mul(entry[(0, 0)], entry[(1, 1)], n),
                                 _series_mul(entry[(0, 1)], entry[(1, 0)], n))]
    return [p.coeff_norm() for p in det]
