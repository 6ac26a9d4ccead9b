import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conley_switch.corpus import load
from conley_switch.errors import HypothesesNotMet, InvarianceViolation, TransversalityFail
from conley_switch.field import make_fdelta
from conley_switch.pipeline import analyze, build_region_lattice
from conley_switch.regions import Region, build_region, build_tiles, make_chip
from conley_switch.stg import Face, build_stg
from conley_switch.verify import (
    _first_positive_root,
    check_forward_invariance,
    check_transversality,
    chip_coefficients,
    chip_quadratic,
    localize_morse_sets,
    perturb_and_recheck,
    sample_region,
)

from conftest import corpus_systems

D = F(1, 50)


@pytest.fixture(scope="module")
def ts_w1():
    sf = load("toggle")
    stg = build_stg(sf.system)
    region = build_region(stg, build_tiles(sf.system, D), {Face.point((1, 0))})
    return make_fdelta(sf.system, D), region


@pytest.fixture(scope="module")
def nf_full():
    a = analyze(load("negative_feedback").system)
    rl = build_region_lattice(a, D)
    return make_fdelta(a.system, D), rl


# --- sampled transversality -----------------------------------------------------


def test_toggle_edges_point_inward(ts_w1):
    sampler, region = ts_w1
    rep = check_transversality(sampler, region, 100)
    assert rep.passed and len(rep.edges) == 4
    inner = {(e.start, e.end): e for e in rep.edges if e.interior}
    assert len(inner) == 2  # the bottom and right sides lie on the outer box
    left = next(e for e in inner.values() if e.start[0] == e.end[0])
    top = next(e for e in inner.values() if e.start[1] == e.end[1])
    # constant field on the core: V = Lambda - x
    assert left.margin == pytest.approx(-(2 - 1.02))
    assert top.margin == pytest.approx(0.5 - 0.98)
    assert all(e.envelope_certified for e in inner.values())
    assert rep.worst.margin == pytest.approx(-0.48)


def test_negative_feedback_edges_point_inward(nf_full):
    sampler, rl = nf_full
    rep = check_transversality(sampler, rl.top, 100)
    assert rep.passed
    assert all(e.margin < 0 for e in rep.edges if e.interior)
    assert {c for e in rep.edges for c in e.cases} <= {"TG2", "TG1i", "TG1j", "TG0"}


def test_strict_transversality_raises():
    a = analyze(load("leaky_cycle").system)
    rl = build_region_lattice(a, F(1, 5), allow_unsafe=True)
    sampler = make_fdelta(a.system, F(1, 5))
    region = next(r for r in rl.regions if r.counts()["Cw"])
    rep = check_transversality(sampler, region, 100)
    assert not rep.passed
    assert any("TC" in e.cases for e in rep.failures)
    with pytest.raises(TransversalityFail):
        check_transversality(sampler, region, 100, strict=True)


# --- chip quadratic -------------------------------------------------------------


def test_narrow_quadratic_example():
    for t in (0.0, 1.0):
        k, l, m = chip_coefficients("narrow", (1.0, 1.0), 0.5, t, (2.0, 0.5))
        assert (k, l, m) == pytest.approx((1.0, -2.5, 0.25))
        bound = _first_positive_root(k, l, m)
        assert bound == pytest.approx((2.5 - math.sqrt(5.25)) / 2)
        assert bound == pytest.approx(0.104356, abs=5e-7)
        assert k * bound**2 + l * bound + m == pytest.approx(0, abs=1e-12)


@given(st.floats(0.1, 5), st.floats(0, 1), st.floats(0.1, 3))
def test_equal_rates_give_constant_k(g, t, h):
    for kind in ("narrow", "wide"):
        k, _, _ = chip_coefficients(kind, (g, g), h, t, (1.0, 1.0))
        assert k == pytest.approx(g)


def _direct_t(kind, gamma, h, t, offset, d):
    """Field at the hypotenuse point dotted with the inward normal, evaluated directly."""
    if kind == "narrow":
        p = (d + (h - d) * t, t * d)
        nu = (-d, h - d)
    else:
        p = (d + (h - d) * t, (2 * t - 1) * d)
        nu = (-2 * d, h - d)
    v = (gamma[0] * (offset[0] - p[0]), gamma[1] * (offset[1] - p[1]))
    return v[0] * nu[0] + v[1] * nu[1]


@given(st.sampled_from(["narrow", "wide"]), st.floats(0.1, 4), st.floats(0.1, 4), st.floats(0.2, 3),
       st.floats(0, 1), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.001, 0.1))
def test_coefficients_match_direct_evaluation(kind, g1, g2, h, t, u, w, d):
    k, l, m = chip_coefficients(kind, (g1, g2), h, t, (u, w))
    assert k * d * d + l * d + m == pytest.approx(_direct_t(kind, (g1, g2), h, t, (u, w), d), abs=1e-9)


coefficient = st.integers(-500, 500).map(lambda v: v / 100)


@given(coefficient, coefficient, coefficient)
def test_first_positive_root_oracle(k, l, m):
    b = _first_positive_root(k, l, m)
    roots = np.roots([k, l, m]) if k != 0 else (np.roots([l, m]) if l != 0 else np.array([]))
    positive = [r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 1e-12]
    if m <= 0:
        assert b == 0
    elif positive:
        assert b == pytest.approx(min(positive), rel=1e-6)
    else:
        assert b == math.inf


def _corpus_chips():
    for name, sys in corpus_systems():
        a = analyze(sys)
        rl = build_region_lattice(a)
        seen = set()
        for r in rl.regions:
            for key, chip in r.chips.items():
                if key not in seen:
                    seen.add(key)
                    yield name, a, r, chip


CHIPS = list(_corpus_chips())


def test_corpus_has_chips():
    assert len(CHIPS) >= 10
    assert any(c.kind == "wide" for _, _, _, c in CHIPS)


@pytest.mark.parametrize("name,a,region,chip", CHIPS, ids=[f"{c[0]}-{k}" for k, c in enumerate(CHIPS)])
def test_chip_bound_dominates_delta_star(name, a, region, chip):
    cert = chip_quadratic(a.system, chip, region.tiles.delta)
    assert cert.hypotheses_met
    assert cert.bound >= a.constants.delta_star
    assert cert.certified
    # the sampled hypotenuse agrees with the certificate
    sampler = make_fdelta(a.system, region.tiles.delta)
    (p, q) = chip.hypotenuse
    pts = np.array([[float(p[0]), float(p[1])], [float(q[0]), float(q[1])]])
    ts = np.linspace(1e-6, 1 - 1e-6, 200)[:, None]
    line = pts[0] + ts * (pts[1] - pts[0])
    inward = np.array([-(pts[1] - pts[0])[1], (pts[1] - pts[0])[0]])
    c = np.mean([[float(x), float(y)] for x, y in chip.vertices], axis=0)
    if np.dot(c - pts[0], inward) < 0:
        inward = -inward
    assert (sampler.v_many(line) @ inward > 0).all()


def test_hypotheses_not_met(ts):
    tiles = build_tiles(ts, D)
    # the toggle's north-east cell is of type SW, outside the chip case tables
    chip = make_chip("narrow", (1, 1), Face.wall(1, 1, 1), (1, 1), tiles)
    with pytest.raises(HypothesesNotMet):
        chip_quadratic(ts, chip)
    assert not chip_quadratic(ts, chip, strict=False).hypotheses_met


def test_wide_chip_fails_above_its_bound():
    a = analyze(load("leaky_cycle").system)
    rl = build_region_lattice(a, F(1, 5), allow_unsafe=True)
    region = next(r for r in rl.regions if r.counts()["Cw"])
    wide = [c for c in region.chips.values() if c.kind == "wide"]
    cert = chip_quadratic(a.system, wide[0], F(1, 5))
    assert cert.bound < 0.2 and not cert.certified


# --- trajectories ---------------------------------------------------------------


def test_invariance_examples(ts_w1, nf_full):
    sampler, region = ts_w1
    rep = check_forward_invariance(sampler, region, n_traj=300, horizon=20, seed=1)
    assert rep.passed and rep.escapes == 0 and rep.n_traj == 300
    sampler, rl = nf_full
    assert check_forward_invariance(sampler, rl.top, n_traj=300, horizon=20, seed=1).passed


def test_shrunken_region_leaks(nf_full):
    sampler, rl = nf_full
    full = rl.top
    collar = sorted(k for k in full.inventory if k[0] == "G1")[0]
    broken = full.without(collar)
    rep = check_forward_invariance(sampler, broken, n_traj=300, horizon=20, seed=2)
    assert rep.escapes > 0 and not rep.passed
    with pytest.raises(InvarianceViolation):
        check_forward_invariance(sampler, broken, n_traj=300, horizon=20, seed=2, strict=True)


def test_empty_region_rejected(ts_w1):
    sampler, region = ts_w1
    with pytest.raises(ValueError):
        check_forward_invariance(sampler, Region(frozenset(), frozenset(), frozenset(), region.tiles))


def test_sampling_stays_inside(nf_full):
    _, rl = nf_full
    pts = sample_region(rl.top.pieces, 2000, np.random.default_rng(0))
    ok = [any(p.contains((F(x).limit_denominator(10**9), F(y).limit_denominator(10**9))) for p in rl.top.pieces)
          for x, y in pts]
    assert np.mean(ok) > 0.999  # rounding may push a handful a hair across an edge


def test_invariance_is_seeded(ts_w1):
    sampler, region = ts_w1
    a = check_forward_invariance(sampler, region, n_traj=50, horizon=5, seed=9)
    b = check_forward_invariance(sampler, region, n_traj=50, horizon=5, seed=9)
    assert a == b


def test_localization_toggle():
    a = analyze(load("toggle").system)
    rl = build_region_lattice(a, D)
    rep = localize_morse_sets(make_fdelta(a.system, D), rl, n_traj=400, horizon=30, seed=3)
    assert rep.passed and rep.violations == 0
    # both join-irreducibles have the empty attractor below them; tails stay in their own core
    for tally in rep.nodes:
        assert tally.starts > 0 and tally.tails_in_difference == tally.starts
    assert rep.outside_top_starts > 0
    assert rep.outside_top_tails_in_top == rep.outside_top_starts


def test_localization_negative_feedback(nf_full):
    sampler, rl = nf_full
    rep = localize_morse_sets(sampler, rl, n_traj=200, horizon=30, seed=4)
    assert rep.passed and len(rep.nodes) == 1


# --- perturbations --------------------------------------------------------------


def test_perturbation_examples(ts_w1):
    sampler, region = ts_w1
    assert perturb_and_recheck(sampler, 0.0, region, n_traj=50, horizon=5).passed
    assert perturb_and_recheck(sampler, 0.1, region, n_traj=50, horizon=5).passed
    margin = -check_transversality(sampler, region).worst.margin
    rep = perturb_and_recheck(sampler, margin + 0.2, region, n_traj=50, horizon=5, mode="aligned")
    assert not rep.passed
    assert rep.largest_passing < margin
    assert rep.largest_passing > margin - (margin + 0.2) / 2**7


# --- known gap ------------------------------------------------------------------


def test_known_gap_on_grid_point_square():
    sf = load("known_gaps/tg0_gap")
    a = analyze(sf.system)
    rl = build_region_lattice(a)
    region = rl.regions[2]
    sampler = make_fdelta(a.system, region.tiles.delta)
    rep = check_transversality(sampler, region)
    bad = rep.failures
    assert bad and all(e.cases == ("TG0",) for e in bad)
    assert all(e.envelope_certified is False for e in bad)
    # trajectories started on the offending side leave by far less than the collar width
    e = bad[0]
    n = np.array(region.boundary[e.loop].edges[e.index].normal)
    a0, b0 = (np.array([float(c) for c in p]) for p in (e.start, e.end))
    starts = np.array([a0 + u * (b0 - a0) - 1e-7 * n for u in np.linspace(0.01, 0.99, 40)])
    inv = check_forward_invariance(sampler, region, starts=starts, dt=1e-4, horizon=2)
    assert inv.escapes == 0
    assert 0 < inv.worst_excess < float(region.tiles.delta) / 4
