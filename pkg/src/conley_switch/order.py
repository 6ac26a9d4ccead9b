"""Finite posets and distributive lattices, Morse graphs and attractor lattices.

A Morse set is a strongly connected component of the transition graph that
carries at least one edge.  Attractors (vertex sets with ``F(A) = A``) form a
finite distributive lattice; by Birkhoff duality its join-irreducible elements
are in order-preserving bijection with the Morse sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable

import networkx as nx
import numpy as np

from .errors import NotDistributive, NotForwardInvariant, TooLarge
from .stg import Face, TransitionGraph

__all__ = [
    "Poset",
    "FiniteLattice",
    "MorseGraph",
    "AttractorLattice",
    "morse_decomposition",
    "morse_graph",
    "down_set_lattice",
    "join_irreducibles",
    "attractor_lattice",
    "largest_attractor_within",
    "forward_invariant_core",
    "is_attractor",
    "posets_isomorphic",
    "lattices_isomorphic",
    "MAX_DOWN_SET_POSET",
]

MAX_DOWN_SET_POSET = 20
DISTRIBUTIVITY_EXHAUSTIVE = 64


@dataclass(frozen=True)
class Poset:
    """Strict order on ``elements`` stored as its closure and its Hasse diagram.

    ``below[x]`` is the set of elements strictly less than ``x``; ``covers``
    lists pairs ``(lower, upper)`` of the transitive reduction.
    """

    elements: tuple
    below: dict = field(repr=False)
    covers: tuple

    @classmethod
    def from_relation(cls, elements: Iterable[Hashable], less: Iterable[tuple]) -> "Poset":
        """Poset generated by the pairs ``(a, b)`` meaning ``a < b``."""
        elements = tuple(elements)
        g = nx.DiGraph()
        g.add_nodes_from(elements)
        g.add_edges_from((b, a) for a, b in less if a != b)
        if not nx.is_directed_acyclic_graph(g):
            raise ValueError("the relation has a cycle and does not define a partial order")
        below = {x: frozenset(nx.descendants(g, x)) for x in elements}
        reduced = nx.transitive_reduction(g)
        index = {x: k for k, x in enumerate(elements)}
        covers = sorted(((a, b) for b, a in reduced.edges), key=lambda e: (index[e[0]], index[e[1]]))
        return cls(elements, below, tuple(covers))

    def __len__(self) -> int:
        return len(self.elements)

    def less(self, a, b) -> bool:
        return a in self.below[b]

    def leq(self, a, b) -> bool:
        return a == b or a in self.below[b]

    def down(self, x) -> frozenset:
        return self.below[x] | {x}

    def is_down_set(self, subset: Iterable) -> bool:
        s = set(subset)
        return all(self.below[x] <= s for x in s)

    def hasse_digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(len(self.elements)))
        index = {x: k for k, x in enumerate(self.elements)}
        g.add_edges_from((index[a], index[b]) for a, b in self.covers)
        return g


def posets_isomorphic(p: Poset, q: Poset) -> bool:
    """Order isomorphism, decided as digraph isomorphism of the Hasse diagrams."""
    if len(p) != len(q) or len(p.covers) != len(q.covers):
        return False
    return nx.is_isomorphic(p.hasse_digraph(), q.hasse_digraph())


@dataclass(frozen=True)
class FiniteLattice:
    """A finite lattice on ``elements`` with join and meet tables of element indices."""

    elements: tuple
    leq: np.ndarray = field(repr=False)
    join: np.ndarray = field(repr=False)
    meet: np.ndarray = field(repr=False)
    bottom: int
    top: int

    @classmethod
    def from_sets(cls, sets: Iterable[frozenset],
                  meet: Callable[[frozenset, frozenset], frozenset] | None = None) -> "FiniteLattice":
        """Lattice of sets ordered by inclusion, closed under union.

        ``meet`` defaults to intersection; attractor lattices pass the largest
        attractor inside the intersection instead.
        """
        elements = tuple(sorted(set(map(frozenset, sets)), key=_set_key))
        index = {s: k for k, s in enumerate(elements)}
        n = len(elements)
        leq = np.zeros((n, n), dtype=bool)
        join = np.zeros((n, n), dtype=np.int64)
        mt = np.zeros((n, n), dtype=np.int64)
        meet = meet or (lambda a, b: a & b)
        for a in range(n):
            for b in range(a, n):
                sa, sb = elements[a], elements[b]
                leq[a, b] = sa <= sb
                leq[b, a] = sb <= sa
                try:
                    join[a, b] = join[b, a] = index[sa | sb]
                    mt[a, b] = mt[b, a] = index[meet(sa, sb)]
                except KeyError as exc:
                    raise ValueError(f"family is not closed under the lattice operations: {exc}") from None
        bottom = int(np.flatnonzero(leq.all(axis=1))[0])
        top = int(np.flatnonzero(leq.all(axis=0))[0])
        return cls(elements, leq, join, mt, bottom, top)

    def __len__(self) -> int:
        return len(self.elements)

    def index(self, element) -> int:
        return self.elements.index(element)

    def lower_covers(self, u: int) -> list[int]:
        strictly = [v for v in range(len(self)) if v != u and self.leq[v, u]]
        return [v for v in strictly if not any(w != v and self.leq[v, w] for w in strictly)]

    def distributivity_witness(self, rng: np.random.Generator | None = None,
                               samples: int = 20000) -> tuple[int, int, int] | None:
        """A triple with ``a^(b v c) != (a^b) v (a^c)``, or None.

        Exhaustive up to 64 elements, random triples beyond that.
        """
        n = len(self)
        J, M = self.join, self.meet
        if n <= DISTRIBUTIVITY_EXHAUSTIVE:
            lhs = M[np.arange(n)[:, None, None], J[None, :, :]]
            rhs = J[M[:, :, None], M[:, None, :]]
            bad = np.argwhere(lhs != rhs)
            return tuple(int(x) for x in bad[0]) if len(bad) else None
        rng = rng or np.random.default_rng(0)
        a, b, c = rng.integers(0, n, size=(3, samples))
        bad = np.flatnonzero(M[a, J[b, c]] != J[M[a, b], M[a, c]])
        return (int(a[bad[0]]), int(b[bad[0]]), int(c[bad[0]])) if len(bad) else None

    def as_poset(self) -> Poset:
        n = len(self)
        pairs = [(a, b) for a in range(n) for b in range(n) if a != b and self.leq[a, b]]
        return Poset.from_relation(range(n), pairs)


def lattices_isomorphic(a: FiniteLattice, b: FiniteLattice) -> bool:
    """Lattice isomorphism; for lattices this coincides with order isomorphism."""
    return posets_isomorphic(a.as_poset(), b.as_poset())


def _set_key(s: frozenset):
    return (len(s), sorted(map(repr, s)))


def down_set_lattice(p: Poset) -> FiniteLattice:
    """All down sets of ``p`` under union and intersection."""
    if len(p) > MAX_DOWN_SET_POSET:
        raise TooLarge(f"poset has {len(p)} elements; down sets are enumerated only up to {MAX_DOWN_SET_POSET}")
    order = sorted(p.elements, key=lambda x: len(p.below[x]))  # a linear extension
    found = [frozenset()]
    for x in order:
        found.extend(d | {x} for d in list(found) if p.below[x] <= d)
    return FiniteLattice.from_sets(found)


@dataclass(frozen=True)
class JoinIrreducibles:
    """Join-irreducible elements of a lattice (as lattice indices) with their order and predecessors."""

    poset: Poset
    pred: dict[int, int]


def join_irreducibles(lattice: FiniteLattice) -> JoinIrreducibles:
    witness = lattice.distributivity_witness()
    if witness is not None:
        raise NotDistributive(witness)
    pred = {}
    for u in range(len(lattice)):
        covers = lattice.lower_covers(u)
        if len(covers) == 1:
            pred[u] = covers[0]
    elements = sorted(pred)
    less = [(a, b) for a in elements for b in elements if a != b and lattice.leq[a, b]]
    return JoinIrreducibles(Poset.from_relation(elements, less), pred)


# --- transition-graph dynamics -------------------------------------------------


def morse_decomposition(stg: TransitionGraph) -> list[frozenset[Face]]:
    """Strongly connected components carrying at least one edge, ordered by their least vertex."""
    g = nx.DiGraph()
    g.add_nodes_from(stg.vertices)
    g.add_edges_from(stg.edges)
    sets = []
    for comp in nx.strongly_connected_components(g):
        if len(comp) > 1 or any(v in stg.successors[v] for v in comp):
            sets.append(frozenset(comp))
    return sorted(sets, key=min)


@dataclass(frozen=True)
class MorseGraph:
    """Morse sets indexed ``0..n-1`` with the reachability order ``q < p`` iff ``M(p)`` reaches ``M(q)``."""

    morse_sets: tuple[frozenset[Face], ...]
    poset: Poset

    @property
    def nodes(self) -> tuple[int, ...]:
        return self.poset.elements

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        """Hasse edges ``(p, q)`` pointing from the higher node down to the lower one."""
        return tuple((b, a) for a, b in self.poset.covers)

    def augmented(self) -> Poset:
        """The poset with an extra top node ``"top"`` placed above every Morse node."""
        less = [(a, b) for b in self.nodes for a in self.poset.below[b]]
        less += [(p, "top") for p in self.nodes]
        return Poset.from_relation((*self.nodes, "top"), less)


def morse_graph(stg: TransitionGraph) -> MorseGraph:
    sets = tuple(morse_decomposition(stg))
    less = []
    for p, mp in enumerate(sets):
        reach = stg.reachable(mp)
        for q, mq in enumerate(sets):
            if q != p and mq & reach:
                less.append((q, p))
    return MorseGraph(sets, Poset.from_relation(range(len(sets)), less))


def is_attractor(stg: TransitionGraph, vertices: Iterable[Face]) -> bool:
    s = set(vertices)
    return stg.image(s) == s


def largest_attractor_within(stg: TransitionGraph, vertices: Iterable[Face]) -> frozenset[Face]:
    """The largest ``A`` inside ``vertices`` with ``F(A) = A``.

    First strip vertices with an image outside the set until it is forward
    invariant, then apply ``F`` until the (decreasing) sequence stabilizes.
    """
    s = set(vertices)
    changed = True
    while changed:
        changed = False
        for v in sorted(s):
            if not set(stg.successors[v]) <= s:
                s.discard(v)
                changed = True
    while True:
        nxt = stg.image(s)
        if nxt == s:
            return frozenset(s)
        s = nxt


def forward_invariant_core(stg: TransitionGraph, vertices: Iterable[Face]) -> frozenset[Face]:
    """Vertices of a forward-invariant set that have a preimage inside it."""
    n = set(vertices)
    for v in sorted(n):
        for w in stg.successors[v]:
            if w not in n:
                raise NotForwardInvariant(v, w)
    return frozenset(v for v in n if any(u in n for u in stg.predecessors[v]))


@dataclass(frozen=True)
class AttractorLattice:
    lattice: FiniteLattice
    morse: MorseGraph
    join_irreducible: dict[int, int]
    """Morse node of each join-irreducible attractor (keyed by lattice index)."""
    pred: dict[int, int]

    @property
    def attractors(self) -> tuple[frozenset[Face], ...]:
        return self.lattice.elements

    def node_attractor(self, p: int) -> int:
        for a, q in self.join_irreducible.items():
            if q == p:
                return a
        raise KeyError(p)


def attractor_lattice(stg: TransitionGraph, mg: MorseGraph | None = None) -> AttractorLattice:
    """Attractors generated by the down closures of the Morse sets under union."""
    mg = mg or morse_graph(stg)
    generators = [frozenset(stg.reachable(m)) for m in mg.morse_sets]
    found = {frozenset()}
    frontier = [frozenset()]
    while frontier:
        nxt = []
        for a in frontier:
            for g in generators:
                u = a | g
                if u not in found:
                    found.add(u)
                    nxt.append(u)
        frontier = nxt
    for a in found:
        if not is_attractor(stg, a):
            raise AssertionError(f"generated set {sorted(a)} is not an attractor")
    lattice = FiniteLattice.from_sets(found, lambda a, b: largest_attractor_within(stg, a & b))
    ji = join_irreducibles(lattice)
    node_of = {}
    for a, below in ji.pred.items():
        diff = lattice.elements[a] - lattice.elements[below]
        nodes = [p for p, m in enumerate(mg.morse_sets) if m <= diff]
        if len(nodes) != 1:
            raise AssertionError(f"join-irreducible attractor {a} does not isolate one Morse set")
        node_of[a] = nodes[0]
    return AttractorLattice(lattice, mg, node_of, ji.pred)
