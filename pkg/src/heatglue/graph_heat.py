"""Heat kernels on finite simple graphs, with exact time profiles.

Covers the discrete toolkit: graph Laplacians, Dirichlet (relative) kernels,
extension kernels, discrete Dirichlet-to-Neumann matrices, Green's matrices,
the interface kernel by two routes (assembled, and as a convolution series
built only from one-sided data), the two gluing formulas, and the Schur-cut
identity.  Every time-dependent object is an :class:`~heatglue.expmix.ExpMix`
per matrix entry, so gluing identities can be checked coefficient-wise rather
than on a sample grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from heatglue import symlin
from heatglue.expmix import (
    EPS_MERGE,
    POWER_LIMIT,
    ExpMix,
    ZERO,
    _Table,
    _table_add,
    _table_convolve,
    _table_convolve_abs,
    _table_from_mix,
    _table_to_mix,
    _universe_from_rates,
    abs_evaluate,
    laplace,
    mix_sum,
    scale,
)

__all__ = [
    "Graph",
    "Decomposition",
    "KernelMatrix",
    "laplacian",
    "heat_kernel",
    "relative_heat_kernel",
    "green",
    "extension_kernel",
    "dn_single",
    "dn_total",
    "interface_kernel",
    "interface_kernel_series",
    "glue_I",
    "glue_II",
    "schur_cut",
    "graph_from_dict",
    "decomposition_from_dict",
    "random_decomposition",
]

# just above the golden ratio, see _series_tail_factory
_PHI_UP = 1.6180339888


@dataclass(frozen=True)
class Graph:
    """Finite simple graph with an ordered vertex label sequence.

    Edges may be given in any order and orientation; they are canonicalized to
    index-sorted pairs.  Self-loops, duplicate edges, and undeclared endpoints
    are rejected.
    """

    vertices: tuple
    edges: tuple = ()

    def __post_init__(self) -> None:
        verts = tuple(self.vertices)
        if len(set(verts)) != len(verts):
            raise ValueError("duplicate vertex labels")
        index = {v: i for i, v in enumerate(verts)}
        seen = set()
        canon = []
        for e in self.edges:
            a, b = e
            if a == b:
                raise ValueError(f"self-loop at {a!r}")
            if a not in index or b not in index:
                raise ValueError(f"edge ({a!r}, {b!r}) has an undeclared endpoint")
            ia, ib = sorted((index[a], index[b]))
            if (ia, ib) in seen:
                raise ValueError(f"duplicate edge ({a!r}, {b!r})")
            seen.add((ia, ib))
            canon.append((ia, ib))
        canon.sort()
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", tuple((verts[i], verts[j]) for i, j in canon))

    @property
    def n(self) -> int:
        return len(self.vertices)

    @cached_property
    def index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for u, v in self.edges:
            i, j = self.index[u], self.index[v]
            a[i, j] = a[j, i] = 1.0
        a.setflags(write=False)
        return a

    @cached_property
    def valencies(self) -> np.ndarray:
        v = self.adjacency.sum(axis=1)
        v.setflags(write=False)
        return v

    def degree(self, v) -> int:
        return int(self.valencies[self.index[v]])

    def neighbors(self, v) -> tuple:
        i = self.index[v]
        return tuple(self.vertices[j] for j in np.nonzero(self.adjacency[i])[0])

    def induced(self, labels: Sequence) -> "Graph":
        keep = set(labels)
        for v in keep:
            if v not in self.index:
                raise ValueError(f"unknown vertex {v!r}")
        edges = tuple(e for e in self.edges if e[0] in keep and e[1] in keep)
        return Graph(tuple(labels), edges)

    def with_vertex_order(self, order: Sequence) -> "Graph":
        if set(order) != set(self.vertices) or len(tuple(order)) != self.n:
            raise ValueError("order must be a permutation of the vertex labels")
        return Graph(tuple(order), self.edges)

    def to_dict(self) -> dict:
        return {
            "vertices": list(self.vertices),
            "edges": [[u, v] for u, v in self.edges],
        }


def graph_from_dict(d: dict) -> Graph:
    if not isinstance(d, dict) or "vertices" not in d:
        raise ValueError('expected {"vertices": [...], "edges": [...]}')
    return Graph(tuple(d["vertices"]), tuple(tuple(e) for e in d.get("edges", ())))


@dataclass(frozen=True)
class Decomposition:
    """A graph split into side1 | interface | side2 with no cross edge.

    ``side1``/``side2`` may be omitted; the remainder of the vertex set is then
    assigned by connectivity (the component of the first non-interface vertex
    becomes side1).  An edge joining side1 to side2 is an error, not a silent
    re-partition.  All matrices produced from a decomposition are indexed in
    the order side1 + interface + side2.
    """

    graph: Graph
    interface: tuple
    side1: tuple | None = None
    side2: tuple | None = None

    def __post_init__(self) -> None:
        g = self.graph
        y = tuple(self.interface)
        if len(y) == 0:
            raise ValueError("interface must be nonempty")
        if len(set(y)) != len(y):
            raise ValueError("duplicate interface labels")
        for v in y:
            if v not in g.index:
                raise ValueError(f"interface vertex {v!r} not in graph")
        yset = set(y)
        rest = [v for v in g.vertices if v not in yset]
        if not rest:
            raise ValueError("interface equals the whole vertex set")

        s1, s2 = self.side1, self.side2
        if s1 is None and s2 is None:
            comp = self._component_of(rest[0], yset)
            s1 = tuple(v for v in g.vertices if v in comp)
            s2 = tuple(v for v in rest if v not in comp)
        elif s1 is None:
            s2 = tuple(s2)
            s1 = tuple(v for v in rest if v not in set(s2))
        elif s2 is None:
            s1 = tuple(s1)
            s2 = tuple(v for v in rest if v not in set(s1))
        else:
            s1, s2 = tuple(s1), tuple(s2)

        for v in s1 + s2:
            if v not in g.index:
                raise ValueError(f"side vertex {v!r} not in graph")
        if sorted(g.index[v] for v in s1 + y + s2) != list(range(g.n)):
            raise ValueError("side1, interface, side2 must partition the vertex set")
        set1, set2 = set(s1), set(s2)
        for u, v in g.edges:
            if (u in set1 and v in set2) or (u in set2 and v in set1):
                raise ValueError(f"edge ({u!r}, {v!r}) joins the two sides")
        object.__setattr__(self, "interface", y)
        object.__setattr__(self, "side1", s1)
        object.__setattr__(self, "side2", s2)

    def _component_of(self, start, forbidden: set) -> set:
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in self.graph.neighbors(u):
                if w not in forbidden and w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    @cached_property
    def ordered_graph(self) -> Graph:
        return self.graph.with_vertex_order(self.side1 + self.interface + self.side2)

    @cached_property
    def side_graphs(self) -> tuple[Graph, Graph]:
        g = self.graph
        return (
            g.induced(self.side1 + self.interface),
            g.induced(self.interface + self.side2),
        )

    def to_dict(self) -> dict:
        d = self.graph.to_dict()
        d["interface"] = list(self.interface)
        d["side1"] = list(self.side1)
        d["side2"] = list(self.side2)
        return d


def decomposition_from_dict(d: dict) -> Decomposition:
    g = graph_from_dict(d)
    if "interface" not in d:
        raise ValueError('decomposition JSON needs an "interface" list')
    return Decomposition(
        g,
        tuple(d["interface"]),
        tuple(d["side1"]) if "side1" in d else None,
        tuple(d["side2"]) if "side2" in d else None,
    )


@dataclass(frozen=True)
class KernelMatrix:
    """Matrix of ExpMix entries with row and column labels."""

    rows: tuple
    cols: tuple
    entries: tuple  # tuple of row tuples of ExpMix

    @cached_property
    def _row_index(self) -> dict:
        return {v: i for i, v in enumerate(self.rows)}

    @cached_property
    def _col_index(self) -> dict:
        return {v: i for i, v in enumerate(self.cols)}

    def entry(self, u, v) -> ExpMix:
        return self.entries[self._row_index[u]][self._col_index[v]]

    def evaluate(self, t: float) -> np.ndarray:
        """Pointwise values at t > 0 (atoms do not contribute there)."""
        from heatglue.expmix import evaluate as ev

        out = np.zeros((len(self.rows), len(self.cols)))
        for i, row in enumerate(self.entries):
            for j, m in enumerate(row):
                if m.terms:
                    out[i, j] = ev(m, t)
        return out

    def laplace(self, s: float) -> np.ndarray:
        out = np.zeros((len(self.rows), len(self.cols)))
        for i, row in enumerate(self.entries):
            for j, m in enumerate(row):
                out[i, j] = laplace(m, s)
        return out

    def transpose(self) -> "KernelMatrix":
        ent = tuple(tuple(self.entries[i][j] for i in range(len(self.rows)))
                    for j in range(len(self.cols)))
        return KernelMatrix(self.cols, self.rows, ent)

    def restrict(self, rows: Sequence, cols: Sequence) -> "KernelMatrix":
        ent = tuple(tuple(self.entry(u, v) for v in cols) for u in rows)
        return KernelMatrix(tuple(rows), tuple(cols), ent)


# ---------------------------------------------------------------------------
# basic kernels
# ---------------------------------------------------------------------------


def laplacian(g: Graph) -> symlin.SymMatrix:
    """D - A with D the diagonal of valencies."""
    return symlin.SymMatrix(np.diag(g.valencies) - g.adjacency)


def _safe_rate(w: float) -> float:
    if w < 0.0:
        if w < -1e-8:
            raise ValueError(f"negative eigenvalue {w} from a Laplacian")
        return 0.0
    return w


def _spectral_mix_matrix(q: np.ndarray, w: np.ndarray) -> list[list[ExpMix]]:
    n = q.shape[0]
    rates = [_safe_rate(x) for x in w]
    entries: list[list[ExpMix]] = [[ZERO] * n for _ in range(n)]
    for u in range(n):
        for v in range(u, n):
            m = ExpMix(0.0, tuple((q[u, k] * q[v, k], 0, rates[k]) for k in range(len(rates))))
            entries[u][v] = entries[v][u] = m
    return entries


def heat_kernel(g: Graph) -> KernelMatrix:
    """The full heat flow of the graph, entrywise exact in t."""
    d = symlin.eigh(laplacian(g))
    ent = _spectral_mix_matrix(d.eigenvectors, d.eigenvalues)
    return KernelMatrix(g.vertices, g.vertices, tuple(map(tuple, ent)))


def relative_heat_kernel(g: Graph, y: Sequence) -> KernelMatrix:
    """Heat flow killed on y: the complement block keeps its full valencies,
    and rows/columns in y are identically zero."""
    yset = set(y)
    for v in yset:
        if v not in g.index:
            raise ValueError(f"unknown vertex {v!r}")
    comp = [i for i, v in enumerate(g.vertices) if v not in yset]
    if not comp:
        raise ValueError("y must be a proper subset of the vertex set")
    full = laplacian(g).entries
    blk = symlin.SymMatrix(full[np.ix_(comp, comp)])
    d = symlin.eigh(blk)
    small = _spectral_mix_matrix(d.eigenvectors, d.eigenvalues)
    n = g.n
    ent = [[ZERO] * n for _ in range(n)]
    for a, i in enumerate(comp):
        for b, j in enumerate(comp):
            ent[i][j] = small[a][b]
    return KernelMatrix(g.vertices, g.vertices, tuple(map(tuple, ent)))


def green(g: Graph, m2: float) -> np.ndarray:
    """(Laplacian + m2)^-1; m2 must be positive since the Laplacian is singular."""
    if not (m2 > 0.0):
        raise ValueError(f"need m2 > 0, got {m2}")
    d = symlin.eigh(laplacian(g))
    return symlin.spectral_apply(d, lambda w: 1.0 / (w + m2))


def extension_kernel(g: Graph, y: Sequence) -> KernelMatrix:
    """Impulse response of the boundary-data-to-interior map.

    Rows over the complement of y hold the relative kernel hit with the
    complement-to-y adjacency block; rows in y hold the identity times a unit
    atom (boundary values are prescribed, not evolved).
    """
    y = tuple(y)
    if not y:
        raise ValueError("y must be nonempty")
    rel = relative_heat_kernel(g, y)
    a = g.adjacency
    yidx = [g.index[v] for v in y]
    n = g.n
    yset = set(y)
    ent: list[list[ExpMix]] = [[ZERO] * len(y) for _ in range(n)]
    for i, u in enumerate(g.vertices):
        if u in yset:
            ent[i][y.index(u)] = ExpMix(1.0)
            continue
        for jy, yv in enumerate(y):
            parts = []
            for k in np.nonzero(a[:, yidx[jy]])[0]:
                m = rel.entries[i][k]
                if m.terms:
                    parts.append(m)
            if parts:
                ent[i][jy] = mix_sum(parts)
    return KernelMatrix(g.vertices, y, tuple(map(tuple, ent)))


# ---------------------------------------------------------------------------
# Dirichlet-to-Neumann and the interface kernel
# ---------------------------------------------------------------------------


def dn_single(g: Graph, y: Sequence, m2: float) -> np.ndarray:
    """Inverse of the y-y block of the Green's matrix of g."""
    y = tuple(y)
    gm = green(g, m2)
    yi = [g.index[v] for v in y]
    blk = symlin.block(gm, yi, yi)
    try:
        return np.linalg.inv(blk)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by m2 > 0
        raise ValueError(f"singular y-y Green block: {exc}") from exc


def dn_total(g1: Graph, g2: Graph, y: Sequence, m2: float) -> np.ndarray:
    """Two-sided Dirichlet-to-Neumann matrix on the shared interface.

    The sides must intersect exactly in y and agree on its internal edges;
    the shared interface Laplacian plus m2 is counted once, so it is removed
    after summing the one-sided matrices.
    """
    y = tuple(y)
    shared = set(g1.vertices) & set(g2.vertices)
    if shared != set(y):
        raise ValueError("graphs must share exactly the interface vertex set")
    e1 = {frozenset(e) for e in g1.induced(y).edges}
    e2 = {frozenset(e) for e in g2.induced(y).edges}
    if e1 != e2:
        raise ValueError("graphs disagree on interface-internal edges")
    ly = laplacian(g1.induced(y)).entries
    out = dn_single(g1, y, m2) + dn_single(g2, y, m2) - (ly + m2 * np.eye(len(y)))
    return out


def interface_kernel(d: Decomposition) -> KernelMatrix:
    """Interface block of the glued heat kernel (the assembled route).

    Uses the glued graph directly; the series route below reaches the same
    object from one-sided data only.
    """
    k = heat_kernel(d.ordered_graph)
    return k.restrict(d.interface, d.interface)


def _tmatmul(a, b, nrows, ncols, ninner):
    out = [[None] * ncols for _ in range(nrows)]
    for i in range(nrows):
        for j in range(ncols):
            acc = None
            for z in range(ninner):
                ta = a[i][z]
                tb = b[z][j]
                if ta is None or tb is None:
                    continue
                c = _table_convolve(ta, tb, POWER_LIMIT)
                acc = c if acc is None else _table_add(acc, c)
            out[i][j] = acc
    return out


def _tadd(a, b, nrows, ncols):
    out = [[None] * ncols for _ in range(nrows)]
    for i in range(nrows):
        for j in range(ncols):
            if a[i][j] is None:
                out[i][j] = b[i][j]
            elif b[i][j] is None:
                out[i][j] = a[i][j]
            else:
                out[i][j] = _table_add(a[i][j], b[i][j])
    return out


# Shadowed table matrices: (tabs, abs_tabs, gamma).  abs_tabs majorizes the
# entries of tabs coefficient-by-coefficient and, unlike them, accumulates
# without cancellation; gamma is a scalar with |computed - exact| <=
# gamma * abs_tabs entrywise.  This is a running forward-error analysis for
# the convolution pipeline; see the series bound construction below.

_EPS64 = 2.220446049250313e-16
_C_STEP = 512.0  # per-operation rounding budget (recursion depth <= width)


def _abs_of_tables(tabs):
    out = []
    for row in tabs:
        out.append([
            None if tb is None else _Table(tb.universe, np.abs(tb.coef), abs(tb.atom))
            for tb in row
        ])
    return out


def _sh_wrap(tabs):
    return tabs, _abs_of_tables(tabs), 4.0 * _EPS64


def _sh_matmul(sa, sb, nrows, ncols, ninner):
    a, aa, ga = sa
    b, ab, gb = sb
    out = _tmatmul(a, b, nrows, ncols, ninner)
    oabs = [[None] * ncols for _ in range(nrows)]
    for i in range(nrows):
        for j in range(ncols):
            acc = None
            for z in range(ninner):
                ta = aa[i][z]
                tb = ab[z][j]
                if ta is None or tb is None:
                    continue
                c = _table_convolve_abs(ta, tb)
                acc = c if acc is None else _table_add(acc, c)
            oabs[i][j] = acc
    return out, oabs, ga + gb + _C_STEP * _EPS64


def _sh_add(sa, sb, nrows, ncols):
    a, aa, ga = sa
    b, ab, gb = sb
    return (
        _tadd(a, b, nrows, ncols),
        _tadd(aa, ab, nrows, ncols),
        max(ga, gb) + _EPS64,
    )


def _table_abs_eval(tb, t: float) -> float:
    """Sum of coef * t^p * exp(-rate t) over a nonnegative table, no atom."""
    if tb is None or tb.coef.size == 0:
        return 0.0
    powers = np.arange(tb.coef.shape[1], dtype=float)
    damp = np.exp(-tb.universe * t)
    return float((tb.coef * t**powers[None, :] * damp[:, None]).sum())


def _sh_noise(shadow, t: float) -> float:
    """Float-evaluation noise ceiling for the materialized value tables."""
    _, abs_tabs, gamma = shadow
    mass = 0.0
    for row in abs_tabs:
        for tb in row:
            mass += _table_abs_eval(tb, t)
    return (gamma + 4.0 * _EPS64) * mass


def _to_tables(mixes, universe, width):
    out = []
    for row in mixes:
        out.append([
            None if (m.is_zero()) else _table_from_mix(m, universe, width)
            for m in row
        ])
    return out


def _materialize(tables, nrows, ncols):
    ent = []
    for i in range(nrows):
        row = []
        for j in range(ncols):
            t = tables[i][j]
            row.append(ZERO if t is None else _table_to_mix(t))
        ent.append(tuple(row))
    return tuple(ent)


def _exp_series_tail(x: float, m0: int) -> float:
    """Upper bound for sum_{m >= m0} x^m / m!."""
    if x <= 0.0:
        return 0.0
    log_term = m0 * math.log(x) - math.lgamma(m0 + 1.0)
    if log_term > 700.0:
        return math.inf
    term = math.exp(log_term)
    total = 0.0
    m = m0
    while m < m0 + 100000:
        total += term
        m += 1
        term *= x / m
        if m > 2.0 * x and term < 1e-16 * total + 1e-300:
            return total + 2.0 * term  # geometric majorant of the rest
    return math.inf  # pragma: no cover


def _series_tail_factory(d_max: float, k_max: int,
                         shadow) -> Callable[[float], float]:
    # Truncation part: each series term with k one-step factors, j of them
    # acting through the sides, is entrywise at most d_max^(k+j)
    # t^(k+j)/(k+j)!; summing the binomial weights along anti-diagonals gives
    # Fibonacci numbers, which _PHI_UP^m dominates, leaving an exponential
    # tail in _PHI_UP*d_max*t.  On top of that comes the float-evaluation
    # noise of the returned object (from the shadow error analysis), which
    # dominates at large k_max: the canonical coefficients of deep series
    # terms grow geometrically even though the terms themselves are tiny.
    def bound(t: float) -> float:
        t = float(t)
        if not (t > 0.0) or not math.isfinite(t):
            raise ValueError(f"tail bound needs t > 0, got {t}")
        tail = _exp_series_tail(_PHI_UP * d_max * t, k_max + 1)
        return tail + _sh_noise(shadow, t)

    return bound


def _one_step_interface_mixes(d: Decomposition, rel: KernelMatrix | None = None):
    """One-step interface update: delta times A restricted to the interface,
    plus the relative kernels of the two sides sandwiched between adjacency
    rows, as an interface-indexed matrix of mixes."""
    og = d.ordered_graph
    ny = len(d.interface)
    n1 = len(d.side1)
    if rel is None:
        rel = relative_heat_kernel(og, d.interface)
    a = og.adjacency
    yidx = [og.index[v] for v in d.interface]
    ay = a[np.ix_(yidx, yidx)]
    dprime: list[list[ExpMix]] = [[ZERO] * ny for _ in range(ny)]
    for sa, sb in ((0, n1), (n1 + ny, og.n)):
        cols = list(range(sa, sb))
        if not cols:
            continue
        for p in range(ny):
            up = [u for u in cols if a[u, yidx[p]] != 0.0]
            if not up:
                continue
            for q in range(ny):
                vq = [v for v in cols if a[v, yidx[q]] != 0.0]
                parts = [rel.entries[u][v] for u in up for v in vq
                         if rel.entries[u][v].terms]
                if parts:
                    dprime[p][q] = mix_sum([dprime[p][q]] + parts)
    for p in range(ny):
        for q in range(ny):
            if ay[p, q] != 0.0:
                dprime[p][q] = ExpMix(dprime[p][q].atom + ay[p, q], dprime[p][q].terms)
    return dprime


def _series_tables(d: Decomposition, k_max: int):
    """Shared engine for the interface series and gluing II.

    Returns (universe, tables of the k_max-truncated interface series,
    max valency).  All tables share one rate universe: interface valencies
    plus the relative spectrum of the two sides.
    """
    if k_max < 0:
        raise ValueError(f"k_max must be >= 0, got {k_max}")
    og = d.ordered_graph
    y = d.interface
    ny = len(y)
    rel = relative_heat_kernel(og, y)
    yidx = [og.index[v] for v in y]
    vals = og.valencies

    side_cols = [og.index[v] for v in d.side1 + d.side2]
    rel_rates = set()
    for i in side_cols:
        for j in side_cols:
            for term in rel.entries[i][j].terms:
                rel_rates.add(term.rate)
    lam_rates = [vals[i] for i in yidx]
    universe = _universe_from_rates(
        [np.array(sorted(rel_rates)), np.array(lam_rates, dtype=float)], EPS_MERGE
    )

    dprime = _one_step_interface_mixes(d, rel)

    width = 1
    lam = [[ZERO] * ny for _ in range(ny)]
    for p in range(ny):
        lam[p][p] = ExpMix(0.0, ((1.0, 0, float(vals[yidx[p]])),))

    lam_sh = _sh_wrap(_to_tables(lam, universe, width))
    dp_sh = _sh_wrap(_to_tables(dprime, universe, width))
    vstep = _sh_matmul(dp_sh, lam_sh, ny, ny, ny)

    acc = lam_sh
    term = lam_sh
    for _ in range(k_max):
        term = _sh_matmul(term, vstep, ny, ny, ny)
        acc = _sh_add(acc, term, ny, ny)
    d_max = float(vals.max()) if og.n else 0.0
    return universe, acc, d_max


def interface_kernel_series(d: Decomposition, k_max: int):
    """Truncated one-sided series for the interface kernel, with a tail bound.

    Term k is the convolution of k+1 interface decay factors with k one-step
    interface updates; the returned callable maps t > 0 to a rigorous upper
    bound for everything dropped past k_max.
    """
    universe, acc, d_max = _series_tables(d, k_max)
    ny = len(d.interface)
    ent = _materialize(acc[0], ny, ny)
    bound = _series_tail_factory(d_max, k_max, acc)
    return KernelMatrix(d.interface, d.interface, ent), bound


# ---------------------------------------------------------------------------
# gluing
# ---------------------------------------------------------------------------


def _glue_with_interface(d: Decomposition, ifk_shadow, universe):
    """Assemble rel + eps * ifk * eps^T from shadowed interface tables.

    Returns (kernel, correction shadow); the shadow tracks the float error
    of the correction block so callers can report honest bounds.
    """
    og = d.ordered_graph
    y = d.interface
    n, ny = og.n, len(y)
    rel = relative_heat_kernel(og, y)
    eps = extension_kernel(og, y)

    width = 1
    for row in eps.entries:
        for m in row:
            for t in m.terms:
                width = max(width, t.power + 1)
    eps_sh = _sh_wrap(_to_tables(eps.entries, universe, width))
    eps_t = eps_sh[0]
    epsT_sh = (
        [[eps_t[i][j] for i in range(n)] for j in range(ny)],
        [[eps_sh[1][i][j] for i in range(n)] for j in range(ny)],
        eps_sh[2],
    )

    half = _sh_matmul(eps_sh, ifk_shadow, n, ny, ny)
    corr = _sh_matmul(half, epsT_sh, n, n, ny)

    ent = []
    for i in range(n):
        row = []
        for j in range(n):
            base = rel.entries[i][j]
            c = corr[0][i][j]
            if c is None:
                row.append(base)
            else:
                m = _table_to_mix(c)
                row.append(m if base.is_zero() else mix_sum([base, m]))
        ent.append(tuple(row))
    return KernelMatrix(og.vertices, og.vertices, tuple(ent)), corr


def glue_I(d: Decomposition) -> KernelMatrix:
    """First gluing formula: Dirichlet kernel plus extension-dressed interface
    kernel.  Exact as ExpMix coefficients, up to rate-merge rounding."""
    ifk = interface_kernel(d)
    rates = set()
    for row in ifk.entries:
        for m in row:
            rates.update(t.rate for t in m.terms)
    og = d.ordered_graph
    rel_rates = set()
    rel = relative_heat_kernel(og, d.interface)
    for row in rel.entries:
        for m in row:
            rel_rates.update(t.rate for t in m.terms)
    universe = _universe_from_rates(
        [np.array(sorted(rates)), np.array(sorted(rel_rates))], EPS_MERGE
    )
    ifk_t = _to_tables(ifk.entries, universe, 1)
    km, _ = _glue_with_interface(d, _sh_wrap(ifk_t), universe)
    return km


def glue_II(d: Decomposition, k_max: int):
    """Second gluing formula: as glue_I but with the interface kernel replaced
    by its k_max-truncated one-sided series.  Returns (kernel, tail bound);
    the bound includes the extension dressing on both sides."""
    universe, acc, d_max = _series_tables(d, k_max)
    km, corr_shadow = _glue_with_interface(d, acc, universe)

    def bound(t: float) -> float:
        # dressing by the extension kernel costs at most (1 + d_max t) per
        # side: a unit atom plus a sub-Markov smooth part with row sums
        # bounded by d_max, convolved against a monotone tail.  The noise
        # part restates the shadow error analysis of the assembled
        # correction block plus the evaluation rounding of the result.
        t = float(t)
        if not (t > 0.0) or not math.isfinite(t):
            raise ValueError(f"tail bound needs t > 0, got {t}")
        tail = _exp_series_tail(_PHI_UP * d_max * t, k_max + 1)
        dressed = tail * (1.0 + d_max * t) ** 2
        eval_mass = 0.0
        for row in km.entries:
            for m in row:
                eval_mass += abs_evaluate(m, t)
        return dressed + _sh_noise(corr_shadow, t) + 8.0 * _EPS64 * eval_mass

    return km, bound


def schur_cut(g: Graph, y: Sequence, m2: float) -> tuple[np.ndarray, float]:
    """Green's matrix of the y-killed graph, both directly and by Schur
    complement of the full Green's matrix; returns (matrix, max abs gap)."""
    if not (m2 > 0.0):
        raise ValueError(f"need m2 > 0, got {m2}")
    y = tuple(y)
    yset = set(y)
    for v in yset:
        if v not in g.index:
            raise ValueError(f"unknown vertex {v!r}")
    if not y:
        return green(g, m2), 0.0
    comp = [i for i, v in enumerate(g.vertices) if v not in yset]
    yi = [g.index[v] for v in y]

    full = laplacian(g).entries
    if comp:
        blk = symlin.SymMatrix(full[np.ix_(comp, comp)] + m2 * np.eye(len(comp)))
        direct = symlin.spectral_apply(symlin.eigh(blk), lambda w: 1.0 / w)
    else:
        direct = np.zeros((0, 0))

    gm = green(g, m2)
    gaa = symlin.block(gm, comp, comp)
    if yi and comp:
        gab = symlin.block(gm, comp, yi)
        gbb = symlin.block(gm, yi, yi)
        gba = symlin.block(gm, yi, comp)
        via_schur = gaa - gab @ np.linalg.solve(gbb, gba)
    else:
        via_schur = gaa
    residual = float(np.abs(direct - via_schur).max()) if comp else 0.0
    return direct, residual


# ---------------------------------------------------------------------------
# randomized decompositions (test/benchmark support)
# ---------------------------------------------------------------------------


def random_decomposition(rng: np.random.Generator, n_max: int = 12) -> Decomposition:
    """A random split graph: both sides nonempty, interface of 1..3 vertices,
    edges drawn at p=1/2 over all pairs except side1 x side2."""
    if n_max < 3:
        raise ValueError("need room for side1 + interface + side2")
    ny = int(rng.integers(1, min(3, n_max - 2) + 1))
    n1 = int(rng.integers(1, n_max - ny - 1 + 1))
    n2 = int(rng.integers(1, n_max - ny - n1 + 1))
    n = n1 + ny + n2
    labels = tuple(f"v{i}" for i in range(n))
    side1 = labels[:n1]
    inter = labels[n1 : n1 + ny]
    side2 = labels[n1 + ny :]
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            cross = (i < n1 and j >= n1 + ny) or (j < n1 and i >= n1 + ny)
            if cross:
                continue
            if rng.random() < 0.5:
                edges.append((labels[i], labels[j]))
    g = Graph(labels, tuple(edges))
    return Decomposition(g, inter, side1, side2)
