from itertools import combinations
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conley_switch.errors import NotDistributive, NotForwardInvariant, TooLarge
from conley_switch.generate import random_system
from conley_switch.order import (
    FiniteLattice,
    Poset,
    attractor_lattice,
    down_set_lattice,
    forward_invariant_core,
    is_attractor,
    join_irreducibles,
    largest_attractor_within,
    lattices_isomorphic,
    morse_decomposition,
    morse_graph,
    posets_isomorphic,
)
from conley_switch.stg import Face, build_stg
from conley_switch.switching import validate_system

EAST = {"gamma": ["1", "1"], "xi": [{"value": "1", "tag": 1}], "eta": [],
        "lambda": {"0,0": ["3", "1/2"], "1,0": ["2", "1/2"]}}


def reachability(n, edges):
    """Boolean closure by repeated squaring; ``r[a, b]`` iff a path of length >= 1 runs a -> b."""
    r = np.zeros((n, n), dtype=bool)
    for a, b in edges:
        r[a, b] = True
    while True:
        nxt = r | ((r.astype(np.int64) @ r.astype(np.int64)) > 0)
        if (nxt == r).all():
            return r
        r = nxt


def brute_morse_sets(n, edges):
    r = reachability(n, edges)
    seen, out = set(), []
    for v in range(n):
        if v in seen or not r[v, v]:
            continue
        comp = frozenset(w for w in range(n) if r[v, w] and r[w, v])
        seen |= comp
        out.append(comp)
    return sorted(out, key=min)


def graph_like(n, edges):
    succ = {v: tuple(b for a, b in edges if a == v) for v in range(n)}
    return SimpleNamespace(vertices=tuple(range(n)), edges=tuple(edges), successors=succ)


def random_poset(rng, n):
    less = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.35]
    perm = rng.permutation(n)
    return Poset.from_relation(range(n), [(int(perm[a]), int(perm[b])) for a, b in less])


def chain(n):
    return Poset.from_relation(range(n), [(k, k + 1) for k in range(n - 1)])


def m3() -> FiniteLattice:
    n = 5
    leq = np.eye(n, dtype=bool)
    leq[0, :] = True
    leq[:, 4] = True
    join = np.full((n, n), 4)
    meet = np.zeros((n, n), dtype=int)
    for a in range(n):
        join[a, a] = meet[a, a] = a
        join[0, a] = join[a, 0] = a
        meet[4, a] = meet[a, 4] = a
    return FiniteLattice(tuple(range(n)), leq, join, meet, 0, 4)


# --- Morse sets -----------------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.integers(1, 200), st.floats(0.002, 0.05))
@settings(max_examples=40)
def test_scc_matches_reachability_oracle(seed, n, p):
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < p
    edges = [(int(a), int(b)) for a, b in zip(*np.nonzero(mask))]
    assert morse_decomposition(graph_like(n, edges)) == brute_morse_sets(n, edges)


def test_morse_sets_of_examples(ts, nf, single):
    assert morse_decomposition(build_stg(ts)) == [frozenset({Face.point((0, 1))}), frozenset({Face.point((1, 0))})]
    assert morse_decomposition(build_stg(nf)) == [frozenset({Face.wall(0, 1, 0), Face.wall(0, 1, 1),
                                                             Face.wall(1, 1, 0), Face.wall(1, 1, 1)})]
    assert morse_decomposition(build_stg(single)) == [frozenset({Face.point((0, 0))})]


def test_morse_graphs(ts, nf):
    mg = morse_graph(build_stg(ts))
    assert len(mg.morse_sets) == 2 and mg.edges == ()
    mg = morse_graph(build_stg(nf))
    assert len(mg.morse_sets) == 1 and mg.edges == ()
    east = build_stg(validate_system(EAST))
    mg = morse_graph(east)
    assert mg.morse_sets == (frozenset({Face.point((1, 0))}),)


def test_augmented_poset(ts):
    aug = morse_graph(build_stg(ts)).augmented()
    assert aug.less(0, "top") and aug.less(1, "top") and not aug.less(0, 1)


# --- posets and lattices --------------------------------------------------------


def test_poset_rejects_cycles():
    with pytest.raises(ValueError):
        Poset.from_relation("ab", [("a", "b"), ("b", "a")])


def test_hasse_is_transitive_reduction():
    p = Poset.from_relation("abc", [("a", "b"), ("b", "c"), ("a", "c")])
    assert p.covers == (("a", "b"), ("b", "c"))
    assert p.less("a", "c")


def test_down_set_examples():
    antichain = Poset.from_relation("ab", [])
    assert len(down_set_lattice(antichain)) == 4
    assert len(down_set_lattice(chain(3))) == 4
    v = Poset.from_relation("abc", [("a", "c"), ("b", "c")])
    lat = down_set_lattice(v)
    assert set(lat.elements) == {frozenset(), frozenset("a"), frozenset("b"), frozenset("ab"), frozenset("abc")}


def test_down_set_guard():
    with pytest.raises(TooLarge):
        down_set_lattice(Poset.from_relation(range(21), []))


def test_join_irreducible_examples():
    boolean = down_set_lattice(Poset.from_relation("ab", []))
    ji = join_irreducibles(boolean)
    assert len(ji.poset) == 2 and ji.poset.covers == ()
    assert set(ji.pred.values()) == {boolean.bottom}
    ji = join_irreducibles(down_set_lattice(chain(3)))
    assert posets_isomorphic(ji.poset, chain(3))
    v = Poset.from_relation("abc", [("a", "c"), ("b", "c")])
    assert posets_isomorphic(join_irreducibles(down_set_lattice(v)).poset, v)


def test_not_distributive():
    lat = m3()
    assert lat.distributivity_witness() is not None
    with pytest.raises(NotDistributive):
        join_irreducibles(lat)


@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_birkhoff_round_trips(seed, n):
    p = random_poset(np.random.default_rng(seed), n)
    lat = down_set_lattice(p)
    ji = join_irreducibles(lat)
    assert posets_isomorphic(ji.poset, p)
    assert lattices_isomorphic(down_set_lattice(ji.poset), lat)


@given(st.integers(0, 2**32 - 1), st.integers(1, 7))
def test_lattice_laws(seed, n):
    lat = down_set_lattice(random_poset(np.random.default_rng(seed), n))
    J, M = lat.join, lat.meet
    idx = np.arange(len(lat))
    assert (J == J.T).all() and (M == M.T).all()
    assert (J[idx[:, None], M] == idx[:, None]).all()  # absorption a v (a ^ b) = a
    assert (M[lat.bottom] == lat.bottom).all() and (M[lat.top] == idx).all()
    assert lat.distributivity_witness() is None


# --- attractors -----------------------------------------------------------------


def test_attractor_lattices(ts, nf):
    al = attractor_lattice(build_stg(ts))
    w1, w2 = Face.point((1, 0)), Face.point((0, 1))
    assert set(al.lattice.elements) == {frozenset(), frozenset({w1}), frozenset({w2}), frozenset({w1, w2})}
    al = attractor_lattice(build_stg(nf))
    assert len(al.lattice) == 2 and al.lattice.elements[al.lattice.bottom] == frozenset()


def test_forward_invariant_core(ts, nf):
    stg = build_stg(ts)
    w1 = Face.point((1, 0))
    assert forward_invariant_core(stg, {w1}) == {w1}
    with pytest.raises(NotForwardInvariant):
        forward_invariant_core(stg, {Face.wall(0, 0, 0)})
    # every outer wall of the feedback loop feeds the cycle, so adding one keeps invariance
    stg = build_stg(nf)
    cycle = morse_decomposition(stg)[0]
    source = Face.wall(0, 0, 0)
    assert forward_invariant_core(stg, cycle | {source}) == cycle


@given(st.integers(0, 2**32 - 1))
def test_attractor_lattice_is_dual_to_morse_poset(seed):
    sys, _ = random_system(np.random.default_rng(seed), 3, 3)
    stg = build_stg(sys)
    mg = morse_graph(stg)
    al = attractor_lattice(stg, mg)
    for a in al.lattice.elements:
        assert is_attractor(stg, a)
        assert forward_invariant_core(stg, a) == a
    assert lattices_isomorphic(al.lattice, down_set_lattice(mg.poset))
    for a, node in al.join_irreducible.items():
        # M(p) lies in its join-irreducible attractor and not in the predecessor
        assert mg.morse_sets[node] <= al.lattice.elements[a]
        assert not mg.morse_sets[node] & al.lattice.elements[al.pred[a]]


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=8)
def test_meet_is_largest_attractor_inside_intersection(seed):
    # one-threshold systems keep the vertex count at or below 16
    rng = np.random.default_rng(seed)
    sys, _ = random_system(rng, 1, 1)
    stg = build_stg(sys)
    verts = stg.vertices
    assert len(verts) <= 16
    everything = []
    for mask in range(1 << len(verts)):
        s = frozenset(v for k, v in enumerate(verts) if mask >> k & 1)
        if stg.image(s) == s:
            everything.append(s)
    lat = attractor_lattice(stg).lattice
    for a, b in combinations(range(len(lat)), 2):
        inter = lat.elements[a] & lat.elements[b]
        inside = [s for s in everything if s <= inter]
        best = max(inside, key=len)
        assert all(s <= best for s in inside)
        assert largest_attractor_within(stg, inter) == best
        assert lat.elements[lat.meet[a, b]] == best
        assert lat.elements[lat.join[a, b]] == lat.elements[a] | lat.elements[b]


@given(st.integers(0, 2**32 - 1))
def test_reachable_sets_are_forward_invariant(seed):
    rng = np.random.default_rng(seed)
    sys, _ = random_system(rng, 3, 3)
    stg = build_stg(sys)
    start = [stg.vertices[int(k)] for k in rng.choice(len(stg.vertices), 3)]
    n = stg.reachable(start)
    for v in n:
        assert stg.reachable([v]) <= n
