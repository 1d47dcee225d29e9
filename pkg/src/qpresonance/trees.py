"""Labelled trees: enumeration, values, clusters and counting bounds.

Two labelling schemes are supported.

``hamiltonian``
    every line carries a single component label; the root line may also be
    labelled ``Phi`` or ``Gamma`` (zero momentum).  Tree values reproduce the
    one-parameter series coefficient by coefficient.
``general``
    lines carry a pair (e, u) with u the component of the node the line
    leaves.  With ``renormalised=False`` only diagonal pairs are generated
    and the values reproduce the two-parameter series; with
    ``renormalised=True`` the off-diagonal pairs are generated too, while
    nodes with zero mode and a single entering line (self-energy clusters on
    the lowest scale) are excluded.

Self-energy graphs are trees whose leaves include one *stub*: the entering
external line.  It carries momentum zero, so every line between the stub and
the root has the momentum offset x of the external line removed.
"""
from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .model import SystemSpec, TrigPoly, l1, mode_add, zero_mode

BETA, BEE = "beta", "B"
COMPONENTS = (BETA, BEE)
HAMILTONIAN, GENERAL = "hamiltonian", "general"
ROOT_ROLES = ("beta", "B", "Phi", "Gamma")
SE_ROLES = {BETA: "SE_beta", BEE: "SE_B"}
DEFAULT_MAX_TREES = 2_000_000


class TreeBudgetError(RuntimeError):
    """More trees than the configured cap."""


# ---------------------------------------------------------------------------
# planted trees (immutable, canonical)
# ---------------------------------------------------------------------------

class Planted:
    """A node together with everything above it, plus the line leaving it.

    ``line`` is the label of the leaving line: a component for internal
    lines, or one of the root roles.  Children are kept sorted by their
    canonical code, so equal codes mean equivalent trees.
    """

    __slots__ = ("line", "h", "nu", "k", "children", "stub", "kind", "p", "q",
                 "momentum", "order", "size", "has_stub", "code", "sym")

    def __init__(self, line, h, nu, k, children=(), kind="", stub=False):
        self.line = line
        self.h = h
        self.nu = tuple(nu)
        self.k = k
        self.children = tuple(sorted(children, key=lambda c: c.code))
        self.stub = stub
        self.kind = kind
        self.p = sum(1 for c in self.children if c.line == BETA)
        self.q = sum(1 for c in self.children if c.line == BEE)
        mom = self.nu
        for c in self.children:
            mom = mode_add(mom, c.momentum)
        self.momentum = mom
        self.order = k + sum(c.order for c in self.children)
        self.size = (0 if stub else 1) + sum(c.size for c in self.children)
        self.has_stub = stub or any(c.has_stub for c in self.children)
        self.code = (line, h, self.nu, k, stub, tuple(c.code for c in self.children))
        counts = Counter(c.code for c in self.children)
        self.sym = 1.0 / math.prod(math.factorial(m) for m in counts.values())

    @classmethod
    def stub_leaf(cls, e: str, d: int) -> "Planted":
        return cls(e, "", zero_mode(d), 0, (), "", True)

    def with_line(self, line: str) -> "Planted":
        return Planted(line, self.h, self.nu, self.k, self.children, self.kind, self.stub)

    def __repr__(self):
        return f"Planted({self.line}, h={self.h}, nu={self.nu}, k={self.k}, n={self.size})"


def canonical_code(tree) -> tuple:
    """Canonical code of a Planted or LabelledTree."""
    return tree.code


def permuted(P: Planted, rng) -> tuple:
    """Children of every node in a random order, as a nested tuple.

    Used to check that canonicalisation forgets child order.
    """
    kids = [permuted(c, rng) for c in P.children]
    rng.shuffle(kids)
    return (P.line, P.h, P.nu, P.k, P.stub, P.kind, tuple(kids))


def from_nested(t: tuple) -> Planted:
    """Inverse of :func:`permuted`: rebuild a canonical tree."""
    line, h, nu, k, stub, kind, kids = t
    return Planted(line, h, nu, k, [from_nested(c) for c in kids], kind, stub)


# ---------------------------------------------------------------------------
# flattened view
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Node:
    nu: tuple
    h: str
    k: int
    kind: str
    p: int
    q: int
    parent: int
    line: str          # label of the line leaving the node
    momentum: tuple    # momentum of that line (with the stub offset removed)
    on_path: bool      # the line lies between the stub and the root
    depth: int


@dataclass
class LabelledTree:
    """Flattened tree in preorder; node 0 is the one the root line leaves."""

    framework: str
    nodes: list
    sym: float
    code: tuple
    stub_parent: int = -1
    stub_label: str = ""
    children: list = field(default_factory=list)

    @property
    def root_role(self) -> str:
        return self.nodes[0].line

    @property
    def order(self) -> int:
        return sum(v.k for v in self.nodes)

    @property
    def momentum(self) -> tuple:
        return self.nodes[0].momentum

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def is_self_energy(self) -> bool:
        return self.stub_parent >= 0

    @classmethod
    def from_planted(cls, P: Planted, framework: str) -> "LabelledTree":
        nodes: list = []
        children: list = []
        sym = 1.0
        stub = [-1, ""]

        def visit(Q: Planted, parent: int, depth: int):
            nonlocal sym
            idx = len(nodes)
            nodes.append(Node(Q.nu, Q.h, Q.k, Q.kind, Q.p, Q.q, parent, Q.line,
                              Q.momentum, Q.has_stub and parent >= 0, depth))
            children.append([])
            if parent >= 0:
                children[parent].append(idx)
            sym *= Q.sym
            for c in Q.children:
                if c.stub:
                    stub[0], stub[1] = idx, c.line
                else:
                    visit(c, idx, depth + 1)

        visit(P, -1, 0)
        return cls(framework, nodes, sym, P.code, stub[0], stub[1], children)

    # -- structure --------------------------------------------------------
    def subtree(self, v: int) -> list:
        out = [v]
        stack = list(self.children[v])
        while stack:
            w = stack.pop()
            out.append(w)
            stack.extend(self.children[w])
        return sorted(out)

    def order_of(self, nodes) -> int:
        return sum(self.nodes[v].k for v in nodes)

    def K_of(self, nodes) -> int:
        return sum(l1(self.nodes[v].nu) for v in nodes)

    def entering(self, v: int) -> int:
        """Number of lines entering node v (the stub counts)."""
        return len(self.children[v]) + (1 if v == self.stub_parent else 0)

    def conservation_defect(self) -> int:
        """Number of lines whose momentum differs from the sum of node modes above."""
        bad = 0
        for v, node in enumerate(self.nodes):
            total = zero_mode(len(node.nu))
            for w in self.subtree(v):
                total = mode_add(total, self.nodes[w].nu)
            if total != node.momentum:
                bad += 1
        return bad


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------

class TreeEnumerator:
    """Memoised generator of planted trees for one model.

    Parameters
    ----------
    spec : SystemSpec
    framework : {'hamiltonian', 'general'}
    renormalised : bool
        General framework only: allow off-diagonal line labels and drop the
        lowest-scale self-energy nodes.
    prune : bool
        Drop trees containing a node whose factor vanishes identically.
    delta : complex
        Offset of the B-expansion point from its unperturbed value; node
        factors and the frequency map are evaluated there.
    reverse : bool
        Build child lists in reverse pool order (the canonical result must
        not depend on it).
    """

    def __init__(self, spec: SystemSpec, framework: str = HAMILTONIAN, *,
                 renormalised: bool = False, prune: bool = True, delta: complex = 0.0,
                 max_trees: int = DEFAULT_MAX_TREES, reverse: bool = False):
        if framework not in (HAMILTONIAN, GENERAL):
            raise ValueError(f"unknown framework {framework!r}")
        if renormalised and framework != GENERAL:
            raise ValueError("renormalised trees belong to the general framework")
        self.spec = spec
        self.framework = framework
        self.renormalised = renormalised
        self.prune = prune
        self.delta = delta
        self.max_trees = max_trees
        self.reverse = reverse
        self.zero = zero_mode(spec.d)
        self.node_modes = sorted(set(spec.support()) | {self.zero})
        self._factors: dict = {}
        self._planted: dict = {}
        self._multisets: dict = {}
        self.count = 0
        self.slope = spec.omega0_derivative(1, delta)

    # -- node factors -----------------------------------------------------
    def factor(self, kind: str, nu, p: int, q: int) -> TrigPoly:
        """Raw derivative for a node (no factorials; symmetry handled apart)."""
        key = (kind, tuple(nu), p, q)
        if key not in self._factors:
            if kind == "w":
                val = TrigPoly.const(self.spec.omega0_derivative(q, self.delta))
            elif kind == "F":
                val = self.spec.F.derivative(nu, p, q, self.delta)
            else:
                val = self.spec.G.derivative(nu, p, q, self.delta)
            self._factors[key] = val.trim(0.0)
        return self._factors[key]

    def _kind(self, role: str, h: str, kv: int, nu) -> str:
        if kv == 0:
            return "w"
        if h == BETA:
            return "F"
        if self.framework == GENERAL:
            return "G"
        if role in ("Gamma", "SE_B") or nu != self.zero:
            return "G"
        return "F"

    # -- label rules ------------------------------------------------------
    def _heads(self, role: str) -> tuple:
        if self.framework == GENERAL and self.renormalised and role in COMPONENTS:
            return COMPONENTS
        return (BETA,) if role in ("beta", "Phi", "SE_beta") else (BEE,)

    def _allowed(self, role, h, kv, nu_v, nu, stubbed, p, q, s) -> bool:
        zero = self.zero
        if kv == 0:
            if nu_v != zero or p != 0:
                return False
            if h == BEE and (self.framework == GENERAL or q < 2):
                return False
            if h == BETA and q < 1:
                return False
        if self.renormalised and nu_v == zero and s == 1:
            return False
        if role in ("SE_beta", "SE_B"):
            if not stubbed or nu != zero:
                return False
            return not (role == "SE_B" and kv == 0)
        if role in ("Phi", "Gamma"):
            if stubbed or nu != zero:
                return False
            return not (role == "Gamma" and kv == 0)
        # internal lines, or root lines of the plain kind
        if self.framework == GENERAL:
            return nu != zero
        if role == BETA:
            return nu != zero
        if nu != zero or stubbed:
            return kv == 1 and nu != zero
        return True

    # -- multisets of unstubbed children ------------------------------------
    def _pool(self, max_order: int) -> list:
        out = []
        for j in range(1, max_order + 1):
            for lab in COMPONENTS:
                out.extend(self.planted(j, lab))
        if self.reverse:
            out.reverse()
        return out

    def multisets(self, n: int, max_order: int | None = None) -> list:
        """Multisets of unstubbed planted trees with total order n and every
        part of order <= max_order (default n)."""
        max_order = n if max_order is None else max_order
        key = (n, max_order)
        if key in self._multisets:
            return self._multisets[key]
        if n == 0:
            return [()]
        pool = self._pool(min(n, max_order))
        out: list = []

        def rec(start: int, remaining: int, acc: list):
            if remaining == 0:
                out.append(tuple(acc))
                return
            for i in range(start, len(pool)):
                P = pool[i]
                if P.order <= remaining:
                    acc.append(P)
                    rec(i, remaining - P.order, acc)
                    acc.pop()

        rec(0, n, [])
        self._multisets[key] = out
        return out

    def _single_child_ok(self) -> bool:
        # a zero-order node with one entering line is a lowest-scale
        # self-energy cluster, excluded from renormalised trees
        return not self.renormalised

    def _child_sets(self, n: int, stub, kv: int, h: str):
        """Children of a node of order kv whose subtree has total order n + kv.

        Zero-order nodes need at least one B line and no beta line, so a
        single child of full order n must be a B line; every other part is
        of order < n.  This keeps the recursion well founded.
        """
        if stub is None:
            if kv == 1:
                yield from self.multisets(n)
                return
            yield from self.multisets(n, n - 1)
            if h == BETA and self._single_child_ok():
                for P in self.planted(n, BEE):
                    yield (P,)
            return
        for j in range(0, n + 1):
            carriers = []
            if j == 0:
                labs = ()   # order-0 carriers other than the stub never exist
            elif kv == 0 and j == n:
                labs = (BEE,) if h == BETA and self._single_child_ok() else ()
            else:
                labs = COMPONENTS
            for lab in labs:
                carriers.extend(self.planted(j, lab, stub))
            if j == 0:
                carriers.append(Planted.stub_leaf(stub, self.spec.d))
            for c in carriers:
                for rest in self.multisets(n - j):
                    yield rest + (c,)

    # -- main generator -----------------------------------------------------
    def planted(self, k: int, role: str, stub: str | None = None) -> list:
        """Planted trees of order k whose leaving line has the given role.

        With ``stub`` set, exactly one leaf is the entering external line with
        that component.
        """
        key = (k, role, stub)
        if key in self._planted:
            return self._planted[key]
        out: list = []
        for h in self._heads(role):
            for kv in (1, 0):
                n = k - kv
                if n < 0 or (kv == 0 and n == 0 and stub is None):
                    continue
                for kids in self._child_sets(n, stub, kv, h):
                    p = sum(1 for c in kids if c.line == BETA)
                    q = len(kids) - p
                    mom = self.zero
                    for c in kids:
                        mom = mode_add(mom, c.momentum)
                    for nu_v in (self.node_modes if kv == 1 else (self.zero,)):
                        nu = mode_add(mom, nu_v)
                        if not self._allowed(role, h, kv, nu_v, nu, stub is not None,
                                             p, q, len(kids)):
                            continue
                        kind = self._kind(role, h, kv, nu)
                        if self.prune and self.factor(kind, nu_v, p, q).is_zero():
                            continue
                        out.append(Planted(role, h, nu_v, kv, kids, kind))
                        self.count += 1
                        if self.count > self.max_trees:
                            raise TreeBudgetError(f"more than {self.max_trees} trees")
        out.sort(key=lambda P: P.code)
        self._planted[key] = out
        return out

    def trees(self, k: int, role: str, nu=None) -> list:
        """Flattened trees of order k with the given root role (and momentum)."""
        out = []
        for P in self.planted(k, role):
            if nu is None or P.momentum == tuple(nu):
                out.append(LabelledTree.from_planted(P, self.framework))
        return out

    def self_energy_graphs(self, k: int, u: str, e: str) -> list:
        """Self-energy graphs of order k with exiting component u, entering e."""
        return [LabelledTree.from_planted(P, self.framework)
                for P in self.planted(k, SE_ROLES[u], e)]

    # -- values -------------------------------------------------------------
    def line_propagator(self, node: Node) -> complex:
        """Scale-summed propagator of the line leaving ``node`` (off the path)."""
        role = node.line
        if role in ("Phi", "Gamma", "SE_beta", "SE_B"):
            return 1.0
        if node.momentum == self.zero:
            if self.framework == HAMILTONIAN and role == BEE:
                return -1.0 / self.slope
            if self.framework == GENERAL and node.parent < 0:
                return 1.0
            raise ValueError("zero momentum on a line that requires a nonzero one")
        if self.framework == GENERAL and self.renormalised:
            raise ValueError("renormalised propagators are matrices; use module selfenergy")
        return 1.0 / (1j * self.spec.freq(node.momentum))

    def constant_part(self, tree: LabelledTree) -> TrigPoly:
        """Symmetry factor, node factors and all off-path propagators."""
        scal = tree.sym
        poly = TrigPoly.const(1.0)
        for node in tree.nodes:
            poly = poly * self.factor(node.kind, node.nu, node.p, node.q)
            if not node.on_path:
                scal *= self.line_propagator(node)
        return poly * scal

    def path_frequencies(self, tree: LabelledTree) -> np.ndarray:
        return np.array([self.spec.freq(n.momentum) for n in tree.nodes if n.on_path])

    def value(self, tree: LabelledTree) -> TrigPoly:
        """Scale-summed value of an ordinary tree as a function of beta0."""
        if tree.is_self_energy:
            raise ValueError("self-energy graphs depend on x; use value_jet")
        return self.constant_part(tree)

    def value_jet(self, tree: LabelledTree, order: int = 1) -> list:
        """Taylor coefficients in x of a self-energy graph value at x = 0."""
        c = self.constant_part(tree)
        jet = path_jet(self.path_frequencies(tree), order)
        return [c * complex(a) for a in jet]


def path_jet(freqs, order: int) -> np.ndarray:
    """Taylor coefficients at x=0 of prod_l 1/(i(y_l + x)), up to x^order."""
    out = np.zeros(order + 1, dtype=complex)
    out[0] = 1.0
    for y in np.atleast_1d(freqs):
        j = np.arange(order + 1)
        factor = (-1.0) ** j / (1j * y ** (j + 1))
        out = np.convolve(out, factor)[: order + 1]
    return out


def enumerate_trees(spec: SystemSpec, k: int, h: str, nu=None, framework: str = HAMILTONIAN,
                    **kw) -> list:
    """Trees of order k, root role h and (optionally) momentum nu."""
    if h not in ROOT_ROLES:
        raise ValueError(f"unknown root role {h!r}")
    if k <= 0:
        return []
    return TreeEnumerator(spec, framework, **kw).trees(k, h, nu)


def tree_value(tree: LabelledTree, spec: SystemSpec, beta0=None, delta: complex = 0.0):
    """Scale-summed value; a TrigPoly, or a complex number at ``beta0``."""
    en = TreeEnumerator(spec, tree.framework, delta=delta)
    val = en.value(tree)
    return val if beta0 is None else complex(val(beta0))


# ---------------------------------------------------------------------------
# oracle: tree sums against the recursion
# ---------------------------------------------------------------------------

@dataclass
class OracleReport:
    max_rel_error: float
    counts: dict
    worst: tuple = ()

    @property
    def ok(self) -> bool:
        return self.max_rel_error < 1e-11


def tree_sums(enumerator: TreeEnumerator, k: int, role: str) -> dict:
    sums: dict = {}
    for tree in enumerator.trees(k, role):
        val = enumerator.value(tree)
        nu = tree.momentum
        sums[nu] = sums[nu] + val if nu in sums else val
    return sums


def oracle_check(spec: SystemSpec, K_tree: int, series=None, *,
                 framework: str = HAMILTONIAN, delta: complex = 0.0) -> OracleReport:
    """Compare tree sums with the recursion for every order, mode and role.

    The Hamiltonian framework is compared with the one-parameter series,
    the plain general framework with the two-parameter series at ``delta``.
    The error of every coefficient is taken relative to the largest
    coefficient of the same order.
    """
    from .lindstedt import compute_series, table_norm

    two = framework == GENERAL
    if series is None:
        series = compute_series(spec, K_tree, two_parameter=two, delta=delta)
    en = TreeEnumerator(spec, framework, delta=delta)
    worst = 0.0
    where: tuple = ()
    counts: dict = {}
    zero = zero_mode(spec.d)
    for k in range(1, K_tree + 1):
        scale = max(table_norm(series.b.get(k, {})), table_norm(series.B.get(k, {})),
                    table_norm(series.phi.get(k, {})), table_norm(series.gamma.get(k, {})),
                    series.Phi(k, zero).coeff_norm(), 1e-300)
        for role in ROOT_ROLES:
            sums = tree_sums(en, k, role)
            counts[(k, role)] = len(en.planted(k, role))
            if role in ("Phi", "Gamma"):
                keys = {zero}
            else:
                keys = set(sums) | set(series.coefficient_table(k, role))
            for nu in sorted(keys):
                got = sums.get(nu, TrigPoly())
                ref = series.coefficient(k, nu, role)
                err = got.distance(ref) / scale
                if err > worst:
                    worst, where = err, (k, nu, role)
    return OracleReport(worst, counts, where)


# ---------------------------------------------------------------------------
# scales, clusters, self-energy clusters, chains
# ---------------------------------------------------------------------------

def admissible_scales(x: float, cutoffs) -> list:
    """Scales n >= 0 with Psi_n(x) != 0; [-1] at x == 0."""
    if x == 0.0:
        return [-1]
    return cutoffs.active_scales(x)


def scale_assignments(tree: LabelledTree, spec: SystemSpec, cutoffs, limit: int = 1 << 16):
    """Every admissible scale assignment of the lines (leaving each node)."""
    choices = []
    for node in tree.nodes:
        x = spec.freq(node.momentum) if not node.on_path else None
        if node.momentum == zero_mode(spec.d):
            choices.append([-1])
        else:
            opts = admissible_scales(x, cutoffs)
            if not opts:
                return
            choices.append(opts)
    total = math.prod(len(c) for c in choices)
    if total > limit:
        raise TreeBudgetError(f"{total} scale assignments exceed the cap {limit}")
    for combo in itertools.product(*choices):
        yield list(combo)


@dataclass(frozen=True)
class Cluster:
    scale: int
    nodes: frozenset
    top: int
    entering: tuple      # nodes whose leaving line enters the cluster

    @property
    def exit_node(self) -> int:
        return self.top


@dataclass(frozen=True)
class SelfEnergyCluster:
    scale: int
    nodes: frozenset
    exit_node: int       # the exiting line is the line leaving this node
    enter_node: int      # the entering line is the line leaving this node
    path: tuple          # nodes whose leaving lines form the path between them
    mode_sum: tuple      # sum of node modes, zero by definition


@dataclass
class SubgraphReport:
    clusters: list
    self_energy_clusters: list
    resonant_lines: set
    chains: list


def _clusters(tree: LabelledTree, scales: list) -> list:
    out = []
    levels = sorted({s for v, s in enumerate(scales) if v > 0 and s >= 0})
    n_nodes = tree.n_nodes
    for n in levels:
        parent = list(range(n_nodes))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for v in range(1, n_nodes):
            if scales[v] <= n:
                parent[find(v)] = find(tree.nodes[v].parent)
        groups: dict = {}
        for v in range(n_nodes):
            groups.setdefault(find(v), []).append(v)
        for members in groups.values():
            if len(members) < 2:
                continue
            top = min(members)  # preorder: the top node comes first
            inner = [v for v in members if v != top]
            if max(scales[v] for v in inner) != n:
                continue
            mset = frozenset(members)
            entering = tuple(sorted(w for v in members for w in tree.children[v]
                                    if w not in mset))
            out.append(Cluster(n, mset, top, entering))
    return out


def detect_subgraphs(tree: LabelledTree, scales: list, *,
                     framework: str | None = None) -> SubgraphReport:
    """Clusters, self-energy clusters, resonant lines and maximal chains.

    ``scales[v]`` is the scale of the line leaving node v.  The root line
    counts as an exiting line.  The Hamiltonian variant also requires every
    path line to have scale >= 0 and a nonzero momentum once the entering
    momentum is removed.
    """
    framework = framework or tree.framework
    zero = zero_mode(len(tree.nodes[0].nu))
    clusters = _clusters(tree, scales)
    se: list = []
    for T in clusters:
        if len(T.entering) != 1:
            continue
        w = T.entering[0]
        total = zero
        for v in T.nodes:
            total = mode_add(total, tree.nodes[v].nu)
        if total != zero:
            continue
        if scales[T.top] <= T.scale:
            continue  # only possible for the root line
        path = []
        u = tree.nodes[w].parent
        while u != T.top:
            path.append(u)
            u = tree.nodes[u].parent
        if framework == HAMILTONIAN:
            enter_mom = tree.nodes[w].momentum
            bad = False
            for u in path:
                nu0 = tuple(a - b for a, b in zip(tree.nodes[u].momentum, enter_mom))
                if scales[u] < 0 or nu0 == zero:
                    bad = True
            if bad:
                continue
        se.append(SelfEnergyCluster(T.scale, T.nodes, T.top, w, tuple(path), total))
    # lowest scale: one node with zero mode and one entering line
    for v, node in enumerate(tree.nodes):
        if node.nu == zero and len(tree.children[v]) == 1 and v != tree.stub_parent:
            se.append(SelfEnergyCluster(-1, frozenset([v]), v, tree.children[v][0], (), zero))
    exits = {}
    enters = {}
    for i, T in enumerate(se):
        exits.setdefault(T.exit_node, []).append(i)
        enters.setdefault(T.enter_node, []).append(i)
    resonant = {line for line in exits if line in enters}
    chains = []

    def extend(chain):
        last = se[chain[-1]]
        nxt = [j for j in exits.get(last.enter_node, []) if j not in chain]
        if last.enter_node not in resonant or not nxt:
            if len(chain) >= 2:
                chains.append(tuple(chain))
            return
        for j in nxt:
            extend(chain + [j])

    for i, T in enumerate(se):
        if T.exit_node not in resonant:
            extend([i])
    return SubgraphReport(clusters, se, resonant, chains)


def is_renormalised_cluster(T: SelfEnergyCluster, report: SubgraphReport) -> bool:
    """No other self-energy cluster lies strictly inside T."""
    return not any(S.nodes < T.nodes for S in report.self_energy_clusters)


# ---------------------------------------------------------------------------
# counting bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    rule: str
    detail: str


def node_count_bound(tree: LabelledTree, report: SubgraphReport | None = None) -> list:
    """|N| <= 3k-1 (general) or |N| <= 4k-2 (hamiltonian) on the tree, on every
    full subtree and on every self-energy cluster of positive order."""
    a, b, name = (3, 1, "nodes<=3k-1") if tree.framework == GENERAL else (4, 2, "nodes<=4k-2")
    out = []
    groups = [(f"subtree@{v}", tree.subtree(v)) for v in range(tree.n_nodes)]
    if report is not None:
        groups += [(f"self-energy@{T.scale}", sorted(T.nodes))
                   for T in report.self_energy_clusters if T.scale >= 0]
    for label, nodes in groups:
        k = tree.order_of(nodes)
        if len(nodes) > a * k - b:
            out.append(Violation(name, f"{label}: |N|={len(nodes)}, k={k}"))
    return out


def _zeta(x: float, cutoffs) -> int | None:
    sc = admissible_scales(x, cutoffs)
    return min(sc) if sc and sc[0] >= 0 else None


def verify_counting(tree: LabelledTree, scales: list, profile, spec: SystemSpec,
                    cutoffs=None) -> list:
    """Violations of the scale-dependent counting bounds for one assignment.

    General framework: the line-count bound for trees free of self-energy
    clusters, and the order and line-count bounds for every self-energy
    cluster containing no other one.  Hamiltonian framework: the same
    bounds with non-resonant lines counted by minimum scale and one factor
    of two less.
    """
    from .smalldiv import Cutoffs

    cutoffs = cutoffs or Cutoffs(profile)
    rep = detect_subgraphs(tree, scales)
    out = node_count_bound(tree, rep)
    m = profile.m_seq

    def lines_at_least(nodes, p, include):
        return sum(1 for v in nodes if include(v) and scales[v] >= p)

    if tree.framework == GENERAL:
        if not rep.self_energy_clusters:
            Kt = tree.K_of(range(tree.n_nodes))
            top = max(scales)
            for n in range(0, min(top, profile.N) + 1):
                cnt = lines_at_least(range(tree.n_nodes), n, lambda v: True)
                if cnt > 2.0 ** (-(m[n] - 2)) * Kt:
                    out.append(Violation("tree-lines", f"n={n}: {cnt} > 2^-(m_n-2) K={Kt}"))
        for T in rep.self_energy_clusters:
            if T.scale < 0 or not is_renormalised_cluster(T, rep):
                continue
            out += _cluster_bounds(tree, T, scales, m, 2, lambda v: True)
        return out

    # hamiltonian variant
    zero = zero_mode(spec.d)
    zeta = [None if n.momentum == zero else _zeta(spec.freq(n.momentum), cutoffs)
            for n in tree.nodes]

    def counted(v, p):
        return v not in rep.resonant_lines and zeta[v] is not None and zeta[v] >= p

    Kt = tree.K_of(range(tree.n_nodes))
    for n in range(0, profile.N + 1):
        cnt = sum(1 for v in range(tree.n_nodes) if counted(v, n))
        if cnt > 2.0 ** (-(m[n] - 3)) * Kt:
            out.append(Violation("tree-lines-nonresonant", f"n={n}: {cnt} > 2^-(m_n-3) K={Kt}"))
    for T in rep.self_energy_clusters:
        if T.scale < 0:
            continue
        KT = tree.K_of(T.nodes)
        if not KT > 2.0 ** (m[T.scale] - 1):
            out.append(Violation("cluster-order-nonresonant",
                                 f"scale {T.scale}: K={KT} <= 2^(m_n-1)"))
        inner = [v for v in T.nodes if v != T.exit_node]
        for p in range(0, T.scale + 1):
            cnt = sum(1 for v in inner if counted(v, p))
            if cnt > 2.0 ** (-(m[p] - 3)) * KT:
                out.append(Violation("cluster-lines-nonresonant",
                                     f"scale {T.scale}, p={p}: {cnt} > 2^-(m_p-3) K={KT}"))
    return out


def _cluster_bounds(tree, T, scales, m, shift, include) -> list:
    out = []
    KT = tree.K_of(T.nodes)
    if not KT > 2.0 ** (m[T.scale] - 1):
        out.append(Violation("cluster-order", f"scale {T.scale}: K={KT} <= 2^(m_n-1)"))
    inner = [v for v in T.nodes if v != T.exit_node]
    for p in range(0, T.scale + 1):
        cnt = sum(1 for v in inner if include(v) and scales[v] >= p)
        if cnt > 2.0 ** (-(m[p] - shift)) * KT:
            out.append(Violation("cluster-lines", f"scale {T.scale}, p={p}: {cnt} > bound, K={KT}"))
    return out


@dataclass
class CountingReport:
    trees: int
    assignments: int
    violations: list
    self_energy_clusters: int
    chains: int
    max_scale: int

    @property
    def ok(self) -> bool:
        return not self.violations


def counting_sweep(spec: SystemSpec, K_tree: int, profile, *, framework: str = GENERAL,
                   renormalised: bool = True, roles=ROOT_ROLES,
                   assignment_cap: int = 1 << 16) -> CountingReport:
    """Run every counting check over all trees of order <= K_tree and all of
    their admissible scale assignments."""
    from .smalldiv import Cutoffs

    cut = Cutoffs(profile)
    kw = {"renormalised": renormalised} if framework == GENERAL else {}
    en = TreeEnumerator(spec, framework, **kw)
    n_trees = n_assign = n_se = n_chain = 0
    top = -1
    violations: list = []
    for k in range(1, K_tree + 1):
        for role in roles:
            for tree in en.trees(k, role):
                n_trees += 1
                got_any = False
                for scales in scale_assignments(tree, spec, cut, assignment_cap):
                    got_any = True
                    n_assign += 1
                    top = max(top, max(scales))
                    found = verify_counting(tree, scales, profile, spec, cut)
                    rep = detect_subgraphs(tree, scales)
                    n_se += sum(1 for T in rep.self_energy_clusters if T.scale >= 0)
                    n_chain += len(rep.chains)
                    violations += [(tree.code, tuple(scales), v) for v in found]
                if not got_any:
                    violations += [(tree.code, (), v) for v in node_count_bound(tree)]
    return CountingReport(n_trees, n_assign, violations, n_se, n_chain, top)
