"""End-to-end acceptance checks; each prints a single PASS/FAIL line."""

import json
import math
import time
from fractions import Fraction as F

import numpy as np
import pytest

from conley_switch.cli import main
from conley_switch.corpus import load
from conley_switch.field import make_fdelta
from conley_switch.generate import random_system
from conley_switch.geometry import covers
from conley_switch.order import (
    Poset,
    down_set_lattice,
    join_irreducibles,
    lattices_isomorphic,
    morse_decomposition,
    posets_isomorphic,
)
from conley_switch.pipeline import analyze, build_region_lattice, default_delta
from conley_switch.regions import normalize_inventory
from conley_switch.stg import Face
from conley_switch.switching import CellType, classify_cell
from conley_switch.verify import check_forward_invariance, check_transversality, chip_quadratic, localize_morse_sets

from conftest import corpus_systems


def report(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.fixture(scope="module")
def corpus():
    out = []
    for name, sys in corpus_systems():
        a = analyze(sys)
        out.append((name, a, build_region_lattice(a)))
    return out


def _random_poset(rng, n):
    less = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.35]
    perm = rng.permutation(n)
    return Poset.from_relation(range(n), [(int(perm[a]), int(perm[b])) for a, b in less])


def test_criterion_1_birkhoff(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(200):
        p = _random_poset(rng, int(rng.integers(1, 9)))
        lat = down_set_lattice(p)
        ji = join_irreducibles(lat).poset
        if not (posets_isomorphic(ji, p) and lattices_isomorphic(down_set_lattice(ji), lat)):
            bad += 1
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 5
    report(capsys, 1, ok, f"200 posets, {bad} mismatches, {elapsed:.2f} s")
    assert ok


def test_criterion_2_toggle(capsys):
    a = analyze(load("toggle").system)
    c = a.constants
    expected = min(0.5 * 0.5 * 1 / (math.sqrt(2) * (2 * 0.5 + 3 * 2)), math.sqrt(0.5 * 0.5 * 1 / 32))
    ok = (len(a.morse.nodes) == 2 and not a.morse.edges and len(a.attractors.lattice) == 4
          and (c.mu, c.lam, c.rho, c.gamma_bar) == (0.5, 0.5, 2, 1)
          and abs(c.delta_star - expected) <= 1e-12 * expected
          and abs(c.delta_star - 0.025254) < 5e-7)
    report(capsys, 2, ok, f"{len(a.morse.nodes)} Morse nodes, {len(a.morse.edges)} edges, "
                          f"{len(a.attractors.lattice)} attractors, delta* = {c.delta_star:.6f}")
    assert ok


def test_criterion_3_negative_feedback(capsys):
    a = analyze(load("negative_feedback").system)
    walls = {Face.wall(0, 1, 0), Face.wall(0, 1, 1), Face.wall(1, 1, 0), Face.wall(1, 1, 1)}
    rl = build_region_lattice(a, F(1, 50))
    top = rl.top
    cells = [(0, 0), (1, 0), (0, 1), (1, 1)]
    inventory = ({("G2", c) for c in cells} | {("G1", w) for w in walls} | {("G0", (1, 1))})
    ok = (len(a.morse.morse_sets) == 1 and a.morse.morse_sets[0] == walls
          and top.inventory == frozenset(inventory))
    report(capsys, 3, ok, f"Morse set {sorted(map(str, a.morse.morse_sets[0]))}, top region {top.counts()}")
    assert ok


def _brute_morse_sets(stg):
    """Morse sets from the boolean path closure of the adjacency matrix."""
    index = {v: k for k, v in enumerate(stg.vertices)}
    n = len(index)
    r = np.zeros((n, n), dtype=bool)
    for u, v in stg.edges:
        r[index[u], index[v]] = True
    while True:
        nxt = r | ((r.astype(np.int64) @ r.astype(np.int64)) > 0)
        if (nxt == r).all():
            break
        r = nxt
    out = {frozenset(stg.vertices[w] for w in range(n) if r[v, w] and r[w, v]) for v in range(n) if r[v, v]}
    return sorted(out, key=min)


def test_criterion_4_scc_oracle(capsys):
    rng = np.random.default_rng(77)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(100):
        sys, _ = random_system(rng, 3, 3)
        assert sys.I + 1 <= 4 and sys.J + 1 <= 4
        stg = analyze(sys).stg
        if morse_decomposition(stg) != _brute_morse_sets(stg):
            bad += 1
    elapsed = time.perf_counter() - t0
    ok = bad == 0 and elapsed < 30
    report(capsys, 4, ok, f"100 systems, {bad} mismatches, {elapsed:.2f} s")
    assert ok


def test_criterion_5_lattice_homomorphism(capsys, corpus):
    pairs = failures = 0
    for name, a, rl in corpus:
        lat = a.attractors.lattice
        for i in range(len(lat)):
            for j in range(len(lat)):
                pairs += 1
                ri, rj = rl.regions[i], rl.regions[j]
                join_ok = rl.regions[lat.join[i, j]].inventory == normalize_inventory(ri.inventory | rj.inventory)
                meet = rl.regions[lat.meet[i, j]]
                meet_ok = covers(ri.pieces, meet.pieces) and covers(rj.pieces, meet.pieces)
                failures += not (join_ok and meet_ok)
    ok = failures == 0
    report(capsys, 5, ok, f"{pairs} attractor pairs over {len(corpus)} systems, {failures} failures")
    assert ok


def test_criterion_6_transversality(capsys, corpus):
    t0 = time.perf_counter()
    worst = -math.inf
    edges = chips = bad_edges = bad_chips = 0
    for name, a, rl in corpus:
        delta = rl.regions[0].tiles.delta
        assert delta == default_delta(a.constants)
        sampler = make_fdelta(a.system, delta)
        seen = set()
        for r in rl.regions:
            if r.is_empty:
                continue
            rep = check_transversality(sampler, r, 100)
            for e in rep.edges:
                if e.interior:
                    edges += 1
                    worst = max(worst, e.margin)
                    bad_edges += not e.margin < 0
            for key, chip in r.chips.items():
                if key in seen:
                    continue
                seen.add(key)
                chips += 1
                bad_chips += not chip_quadratic(a.system, chip, delta, 101, strict=False).certified
    elapsed = time.perf_counter() - t0
    ok = bad_edges == 0 and bad_chips == 0 and worst < 0 and elapsed < 60
    report(capsys, 6, ok, f"{edges} interior edges, worst margin {worst:.4g}, {chips} chips, "
                          f"{bad_edges + bad_chips} failures, {elapsed:.1f} s")
    assert ok


def _corruption(a, rl, region):
    """A tile whose removal should break invariance: an attracting core first, else a wall collar.

    Removals that leave another region of the lattice are skipped, since those
    remainders are genuinely trapping.
    """
    others = {r.inventory for r in rl.regions}
    keys = sorted(region.inventory, key=lambda k: (not (k[0] == "G2" and classify_cell(a.system, k[1]) is CellType.A),
                                                   k[0] != "G1", repr(k)))
    for key in keys:
        if key[0] in ("G2", "G1") and region.without(key).inventory not in others:
            return key
    return None


def test_criterion_7_forward_invariance(capsys, corpus):
    regions = escapes = 0
    corrupted = caught = 0
    for name, a, rl in corpus:
        sampler = make_fdelta(a.system, rl.regions[0].tiles.delta)
        for r in rl.regions:
            if r.is_empty:
                continue
            regions += 1
            rep = check_forward_invariance(sampler, r, n_traj=1000, dt=1e-3, horizon=50, seed=0)
            escapes += rep.escapes + rep.domain_exits
        key = _corruption(a, rl, rl.top)
        if key is None:
            continue
        broken = rl.top.without(key)
        corrupted += 1
        caught += not check_forward_invariance(sampler, broken, n_traj=200, dt=1e-3, horizon=20, seed=0).passed
    ok = escapes == 0 and corrupted > 0 and caught == corrupted
    report(capsys, 7, ok, f"{regions} regions, {escapes} escapes; {caught}/{corrupted} corrupted regions caught")
    assert ok


def test_criterion_8_localization(capsys, corpus):
    runs = violations = 0
    for name, a, rl in corpus:
        sampler = make_fdelta(a.system, rl.regions[0].tiles.delta)
        rep = localize_morse_sets(sampler, rl, n_traj=1000, dt=1e-3, horizon=50, seed=0)
        runs += rep.n_traj
        violations += rep.violations + rep.domain_exits
        violations += sum(t.starts - t.tails_in_difference - t.tails_in_predecessor for t in rep.nodes)
    ok = violations == 0
    report(capsys, 8, ok, f"{runs} trajectories over {len(corpus)} systems, {violations} violations")
    assert ok


def test_criterion_9_determinism(capsys, tmp_path):
    blobs = []
    for k in range(2):
        path = tmp_path / f"run{k}.json"
        code = main(["verify", "negative_feedback", "--seed", "7", "--trajectories", "200",
                     "--horizon", "10", "--json", str(path)])
        capsys.readouterr()
        assert code == 0
        blobs.append(path.read_bytes())
    ok = blobs[0] == blobs[1] and json.loads(blobs[0])["schema"] == "conley-switch/1"
    report(capsys, 9, ok, f"two seeded runs, {len(blobs[0])} bytes, identical={blobs[0] == blobs[1]}")
    assert ok
