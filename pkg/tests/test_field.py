import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conley_switch.errors import DeltaTooLarge, DomainExit, OutOfDomain
from conley_switch.field import THREADS_ENV, FieldSampler, configure_threads, integrate, make_fdelta, vector_field
from conley_switch.pipeline import analyze, default_delta
from conley_switch.regions import build_tiles
from conley_switch.switching import CellType, classify_cell, validate_system

from conftest import TOGGLE, corpus_systems


def test_field_examples(ts):
    s = make_fdelta(ts, F(1, 50))
    assert s.f((2.0, 0.5)) == pytest.approx((2, 0.5))
    assert s.f((1.0, 0.5)) == pytest.approx((2, 1.25))
    assert s.f((1.0, 1.0)) == pytest.approx((1.25, 1.25))
    assert vector_field(s, (2.0, 0.5)) == pytest.approx((0, 0))
    assert vector_field(s, (1.5, 0.5)) == pytest.approx((0.5, 0))
    assert vector_field(s, (1.0, 0.5)) == pytest.approx((1.0, 0.75))
    for bad in ((0.0, 1.0), (1.0, -0.1), (4.5, 1.0)):
        with pytest.raises(OutOfDomain):
            vector_field(s, bad)


def test_make_fdelta_rejects_wide_collars(ts):
    with pytest.raises(DeltaTooLarge):
        make_fdelta(ts, F(1, 2))
    with pytest.raises(DeltaTooLarge):
        make_fdelta(ts, 0)


def _cell_ranges(values, x, delta):
    """Indices of cells along one axis whose delta-fattened closure contains each x."""
    edges = np.concatenate(([-np.inf], values, [np.inf]))
    lo = edges[:-1][None, :] - delta
    hi = edges[1:][None, :] + delta
    return (lo <= x[:, None]) & (x[:, None] <= hi)


@pytest.mark.parametrize("name,sys", corpus_systems())
def test_envelope(name, sys):
    delta = default_delta(analyze(sys).constants)
    s = make_fdelta(sys, delta)
    rng = np.random.default_rng(7)
    n = 100_000
    pts = rng.uniform(1e-9, 1.0, (n, 2)) * np.array(s.bbox)
    f = s.v_many(pts) + np.array(s.gamma) * pts
    inx = _cell_ranges(s.xs, pts[:, 0], s.delta)
    iny = _cell_ranges(s.ys, pts[:, 1], s.delta)
    mask = inx[:, :, None] & iny[:, None, :]
    for comp, lam in ((0, s.lam1), (1, s.lam2)):
        vals = np.where(mask, lam[None], np.nan)
        lo = np.nanmin(vals.reshape(n, -1), axis=1)
        hi = np.nanmax(vals.reshape(n, -1), axis=1)
        assert (f[:, comp] >= lo - 1e-12).all() and (f[:, comp] <= hi + 1e-12).all()


@pytest.mark.parametrize("name,sys", corpus_systems())
def test_constant_on_cores(name, sys):
    delta = default_delta(analyze(sys).constants)
    s = make_fdelta(sys, delta)
    tiles = build_tiles(sys, delta)
    rng = np.random.default_rng(3)
    for (i, j) in sys.cells():
        x0, x1, y0, y1 = (float(b) for b in tiles[("G2", (i, j))].bounds())
        pts = np.column_stack([rng.uniform(x0, x1, 50), rng.uniform(max(y0, 1e-9), y1, 50)])
        f = s.v_many(pts) + np.array(s.gamma) * pts
        assert np.allclose(f, [s.lam1[i, j], s.lam2[i, j]], atol=1e-12)


@pytest.mark.parametrize("name,sys", corpus_systems())
def test_lipschitz_across_tile_boundaries(name, sys):
    delta = default_delta(analyze(sys).constants)
    s = make_fdelta(sys, delta)
    gaps = [abs(lam[a] - lam[b]) for lam in (s.lam1, s.lam2)
            for a in np.ndindex(lam.shape) for b in np.ndindex(lam.shape)
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1]
    lf = max(gaps) / (2 * s.delta)
    rng = np.random.default_rng(11)
    lines = [(0, t) for t in s.xs] + [(1, t) for t in s.ys]
    for axis, t in lines:
        for edge in (t - s.delta, t + s.delta):
            p = rng.uniform(1e-3, 1.0, (500, 2)) * np.array(s.bbox)
            p[:, axis] = edge + rng.uniform(-s.delta / 4, s.delta / 4, 500)
            q = p + rng.uniform(-s.delta / 4, s.delta / 4, (500, 2))
            q = np.clip(q, 1e-6, np.array(s.bbox))
            fp = s.v_many(p) + np.array(s.gamma) * p
            fq = s.v_many(q) + np.array(s.gamma) * q
            # each partial derivative is bounded by lf, so the l1 step bounds every component
            step = np.abs(p - q).sum(axis=1)
            assert (np.abs(fp - fq).max(axis=1) <= lf * step + 1e-12).all()


def test_convergence_to_focal_point(ts):
    s = make_fdelta(ts, F(1, 50))
    tr = integrate(s, (1.5, 0.5), dt=1e-3, horizon=20)
    assert np.linalg.norm(tr.final - (2, 0.5)) < 1e-6
    still = integrate(s, (2.0, 0.5), dt=1e-3, horizon=5)
    assert np.abs(still.states - (2, 0.5)).max() < 1e-12


@pytest.mark.parametrize("name,sys", corpus_systems())
def test_attracting_cells_converge(name, sys):
    delta = default_delta(analyze(sys).constants)
    s = make_fdelta(sys, delta)
    tiles = build_tiles(sys, delta)
    for cell in sys.cells():
        if classify_cell(sys, cell) is not CellType.A:
            continue
        phi = np.array([float(c) for c in sys.focal(cell)])
        x0, x1, y0, y1 = (float(b) for b in tiles[("G2", cell)].bounds())
        corner = np.array([x1, y1])
        start = phi + 0.01 * (corner - phi) / np.linalg.norm(corner - phi)
        tr = integrate(s, start, dt=1e-3, horizon=20)
        assert np.linalg.norm(tr.final - phi) < 1e-6


def test_rk4_is_fourth_order(single):
    # no thresholds: the field is the constant production rate, so the flow is affine
    sampler = FieldSampler(system=single, delta=1.0, xs=np.zeros(0), ys=np.zeros(0),
                           lam1=np.ones((1, 1)), lam2=np.ones((1, 1)),
                           gamma=(1.0, 2.0), bbox=(2.0, 2.0))
    x0 = np.array([1.9, 0.1])
    phi = np.array([1.0, 0.5])
    horizon = 2.0
    exact = phi + (x0 - phi) * np.exp(-np.array([1.0, 2.0]) * horizon)
    errors = [np.linalg.norm(integrate(sampler, x0, dt=dt, horizon=horizon).final - exact) for dt in (0.2, 0.1, 0.05)]
    for coarse, fine in zip(errors, errors[1:]):
        assert 12 < coarse / fine < 20


def test_negative_feedback_cycles(nf):
    s = make_fdelta(nf, F(1, 50))
    tr = integrate(s, (1.5, 1.5), dt=1e-3, horizon=50)
    xs, ys = tr.states[:, 0], tr.states[:, 1]
    # the orbit spirals into a focus inside G0; follow it until it stays there for good
    outside = np.flatnonzero((np.abs(xs - 1) > 0.02) | (np.abs(ys - 1) > 0.02))
    xs, ys = xs[:outside[-1] + 1], ys[:outside[-1] + 1]
    cells = list(zip((xs > 1).astype(int), (ys > 1).astype(int)))
    visits = [c for k, c in enumerate(cells) if k == 0 or c != cells[k - 1]]
    order = [(0, 0), (1, 0), (1, 1), (0, 1)]  # E, N, W, S cell types in turn
    assert len(visits) >= 8
    start = order.index(visits[0])
    assert visits == [order[(start + k) % 4] for k in range(len(visits))]


def test_domain_exit(ts):
    s = make_fdelta(ts, F(1, 50)).perturbed([[-10.0, -10.0]], [[0.0, 0.0]], [math.pi / 2])
    with pytest.raises(DomainExit) as exc:
        integrate(s, (0.5, 0.5), dt=1e-3, horizon=1)
    assert exc.value.step > 0
    tr = integrate(s, (0.5, 0.5), dt=1e-3, horizon=1, strict=False)
    assert tr.exited_at == exc.value.step
    with pytest.raises(OutOfDomain):
        integrate(s, (-1.0, 0.5))
    with pytest.raises(ValueError):
        integrate(s, (1.0, 0.5), dt=0)


def test_perturbation_bound(ts):
    s = make_fdelta(ts, F(1, 50)).perturbed([[0.3, 0.4], [0.0, 0.1]], [[1, 2], [3, 0]], [0.0, 1.0])
    assert s.perturbation_bound == pytest.approx(0.6)
    base = make_fdelta(ts, F(1, 50))
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.01, 4, (1000, 2))
    assert (np.linalg.norm(s.v_many(pts) - base.v_many(pts), axis=1) <= 0.6 + 1e-12).all()


def test_thread_cap(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "1")
    assert configure_threads() == 1
    monkeypatch.setenv(THREADS_ENV, "not a number")
    assert configure_threads() >= 1


@given(st.floats(0.01, 3.99), st.floats(0.01, 3.99))
def test_vectorized_matches_pointwise(x, y):
    s = make_fdelta(validate_system(TOGGLE), F(1, 50))
    assert s.v_many([[x, y]])[0] == pytest.approx(s.v((x, y)), abs=0)
