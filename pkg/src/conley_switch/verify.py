"""Numerical checks that regions really trap the continuous flow.

Transversality is sampled along every boundary edge and, for chips, certified
by the closed-form quadratic in ``delta`` along the hypotenuse.  Trajectory
checks integrate many RK4 runs and test membership in the regions after every
step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    HypothesesNotMet,
    InvarianceViolation,
    OrderViolation,
    TransversalityFail,
)
from .field import FieldSampler, _invariance_batch, _order_batch, configure_threads, region_planes
from .regions import (
    NARROW,
    Chip,
    Region,
    RegionLattice,
    chip_frame,
    edge_domains,
    elementary_domains,
    on_outer_boundary,
)
from .stg import Face
from .switching import CellType, SwitchingSystem, classify_cell

__all__ = [
    "EdgeCheck",
    "TransversalityReport",
    "ChipCertificate",
    "InvarianceReport",
    "LocalizationReport",
    "PerturbationReport",
    "check_transversality",
    "chip_quadratic",
    "check_forward_invariance",
    "localize_morse_sets",
    "perturb_and_recheck",
    "sample_region",
]

EDGE_INSET = 1e-7

CASE_OF_KIND = {"G2": "TG2", "G0": "TG0", "Cn": "TC", "Cw": "TC"}


def _case(key) -> str:
    if key[0] == "G1":
        # collar of a vertical wall versus a horizontal one
        return "TG1j" if key[1].axis == 0 else "TG1i"
    return CASE_OF_KIND[key[0]]


def _point(p) -> tuple[float, float]:
    return float(p[0]), float(p[1])


# --- transversality ---------------------------------------------------------------


@dataclass(frozen=True)
class EdgeCheck:
    """Sampled ``V.n`` along one boundary edge (``n`` the outward unit normal).

    ``margin`` is the largest sampled value, so negative means strictly inward.
    ``envelope_certified`` is the envelope prediction: True when every field value
    the collar construction allows along the edge points inward, None when the
    envelope alone does not decide it (always None for slanted edges).
    """

    loop: int
    index: int
    start: tuple[Fraction, Fraction]
    end: tuple[Fraction, Fraction]
    cases: tuple[str, ...]
    domains: tuple[tuple[int, int], ...]
    interior: bool
    samples: int
    margin: float
    worst_point: tuple[float, float]
    envelope_certified: bool | None

    def passed(self, margin_floor: float = 0.0) -> bool:
        return not self.interior or self.margin < -margin_floor


@dataclass(frozen=True)
class TransversalityReport:
    edges: tuple[EdgeCheck, ...]
    margin_floor: float

    @property
    def passed(self) -> bool:
        return all(e.passed(self.margin_floor) for e in self.edges)

    @property
    def worst(self) -> EdgeCheck | None:
        inner = [e for e in self.edges if e.interior]
        return max(inner, key=lambda e: e.margin) if inner else None

    @property
    def failures(self) -> list[EdgeCheck]:
        return [e for e in self.edges if not e.passed(self.margin_floor)]

    def raise_on_failure(self) -> None:
        for e in self.failures:
            raise TransversalityFail((e.start, e.end), e.worst_point, e.margin)


def _envelope(sys: SwitchingSystem, delta: Fraction, p, q) -> list[tuple[Fraction, Fraction]]:
    """Production rates of every cell whose collar-fattened open rectangle meets the segment."""
    out = []
    for cell in sys.cells():
        hit = True
        for axis in (0, 1):
            lo, hi = sys.extent(cell, axis)
            a, b = sorted((p[axis], q[axis]))
            if not (a < (math.inf if hi is None else hi + delta) and b > lo - delta):
                hit = False
                break
        if hit:
            out.append(sys.lam(cell))
    return out


def _predict(sys: SwitchingSystem, delta: Fraction, p, q) -> bool | None:
    d = (q[0] - p[0], q[1] - p[1])
    if d[0] != 0 and d[1] != 0:
        return None
    axis = 0 if d[0] == 0 else 1
    # outward normal: the region lies to the left of the direction of travel
    sign = 1 if (d[1] > 0 if axis == 0 else d[0] < 0) else -1
    c = p[axis]
    rates = [lam[axis] for lam in _envelope(sys, delta, p, q)]
    worst = max(sign * (r - sys.gamma[axis] * c) for r in rates)
    return worst < 0


def check_transversality(sampler: FieldSampler, region: Region, samples_per_edge: int = 100,
                         margin_floor: float = 0.0, strict: bool = False) -> TransversalityReport:
    """Sample ``V.n`` along every edge of the region's boundary.

    Samples are evenly spaced with the endpoints pulled in by a tiny inset.  An
    edge passes when its largest sample is below ``-margin_floor``; edges on
    the outer box (the axes and the bounding box) are sampled but not required.
    """
    if samples_per_edge < 2:
        raise ValueError("need at least two samples per edge")
    sys = region.tiles.system
    delta = region.tiles.delta
    domains = elementary_domains(sys, delta)
    ts = np.linspace(EDGE_INSET, 1.0 - EDGE_INSET, samples_per_edge)
    checks = []
    for li, loop in enumerate(region.boundary):
        for ei, edge in enumerate(loop.edges):
            a, b = np.array(_point(edge.start)), np.array(_point(edge.end))
            pts = a[None, :] + ts[:, None] * (b - a)[None, :]
            n = np.array(edge.normal)
            vals = sampler.v_many(pts) @ n
            k = int(np.argmax(vals))
            predictions = [_predict(sys, delta, s, e) for _, s, e in edge.sources]
            predicted = None if any(p is None for p in predictions) else all(predictions)
            checks.append(EdgeCheck(
                loop=li,
                index=ei,
                start=edge.start,
                end=edge.end,
                cases=tuple(sorted({_case(key) for key, _, _ in edge.sources})),
                domains=tuple(edge_domains(edge, domains, sys)),
                interior=not on_outer_boundary(edge, sys),
                samples=samples_per_edge,
                margin=float(vals[k]),
                worst_point=(float(pts[k, 0]), float(pts[k, 1])),
                envelope_certified=predicted,
            ))
    report = TransversalityReport(tuple(checks), margin_floor)
    if strict:
        report.raise_on_failure()
    return report


# --- chip quadratic ---------------------------------------------------------------


NARROW_CELL_TYPES = frozenset({CellType.A, CellType.N, CellType.NE, CellType.E})
NARROW_ACROSS_TYPES = frozenset({CellType.NW})
WIDE_ACROSS_TYPES = frozenset({CellType.N, CellType.NE})


def _first_positive_root(k: float, l: float, m: float) -> float:
    """Largest ``b`` with ``k d^2 + l d + m > 0`` for all ``0 < d < b``."""
    if m <= 0:
        return 0.0
    if k == 0:
        return -m / l if l < 0 else math.inf
    disc = l * l - 4 * k * m
    if disc < 0:
        return math.inf
    q = -0.5 * (l + math.copysign(math.sqrt(disc), l))
    roots = [r for r in (q / k if q != 0 else math.inf, m / q if q != 0 else math.inf) if r > 0]
    return min(roots) if roots else math.inf


def chip_coefficients(kind: str, gamma: tuple[float, float], half_width: float, t: float,
                      offset: tuple[float, float]) -> tuple[float, float, float]:
    """``(K, L, M)`` of ``T(t, d) = K d^2 + L d + M`` in the canonical frame.

    ``offset`` is the focal point minus the grid point, ``half_width`` the
    chip's reach along the wall.  ``T`` is the field along the hypotenuse
    dotted with the chip's inward (unnormalized) normal.
    """
    g1, g2 = gamma
    u, w = offset
    h = half_width
    if kind == NARROW:
        k = (1 - t) * g1 + t * g2
        l = (g1 - g2) * h * t - g1 * u - g2 * w
    else:
        k = 2 * g1 - g2 - 2 * (g1 - g2) * t
        l = (g1 - g2) * 2 * h * t - 2 * g1 * u - g2 * w + h * g2
    return k, l, h * g2 * w


@dataclass(frozen=True)
class ChipCertificate:
    """Worst case of the hypotenuse quadratic over a ``t`` grid and the envelope corners."""

    key: tuple
    kind: str
    cell_types: tuple[CellType, CellType]
    hypotheses_met: bool
    gamma: tuple[float, float]
    half_width: float
    corners: tuple[tuple[float, float], ...]
    t: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)
    M: np.ndarray = field(repr=False)
    bound: float
    delta: float | None
    min_value: float | None

    @property
    def certified(self) -> bool:
        """Whether ``T(t, delta) > 0`` at every grid ``t`` and corner."""
        return self.min_value is not None and self.min_value > 0


def chip_quadratic(sys: SwitchingSystem, chip: Chip, delta=None, t_grid: int = 101,
                   strict: bool = True) -> ChipCertificate:
    """Closed-form transversality certificate for a chip's hypotenuse.

    The focal point in ``T`` ranges over the box spanned by the focal points of
    the chip's cell and the cell across its wall; ``T`` is affine in it, so the
    four corners give the worst case.  ``bound`` is the smallest positive root
    over the grid, i.e. every ``delta`` below it keeps ``T > 0``.
    """
    frame = chip_frame(chip.point, chip.cell, chip.wall)
    low, high = chip.wall.cells()
    across = high if chip.cell == low else low
    types = (frame.type_to_canonical(classify_cell(sys, chip.cell)),
             frame.type_to_canonical(classify_cell(sys, across)))
    allowed = NARROW_ACROSS_TYPES if chip.kind == NARROW else WIDE_ACROSS_TYPES
    met = types[0] in NARROW_CELL_TYPES and types[1] in allowed
    if strict and not met:
        raise HypothesesNotMet(tuple(t.value for t in types))
    px, py = sys.grid.xi[chip.point[0] - 1], sys.grid.eta[chip.point[1] - 1]

    def canonical(v):
        ox, oy = v[0] - px, v[1] - py
        return (frame.sy * oy, frame.sx * ox) if frame.swap else (frame.sx * ox, frame.sy * oy)

    offsets = [canonical(sys.focal(c)) for c in (chip.cell, across)]
    us = sorted({float(o[0]) for o in offsets})
    ws = sorted({float(o[1]) for o in offsets})
    corners = tuple((u, w) for u in (us[0], us[-1]) for w in (ws[0], ws[-1]))
    g = (float(sys.gamma[1]), float(sys.gamma[0])) if frame.swap else (float(sys.gamma[0]), float(sys.gamma[1]))
    h = float(chip.half_width)
    ts = np.linspace(0.0, 1.0, t_grid)
    coeffs = np.array([[chip_coefficients(chip.kind, g, h, t, c) for t in ts] for c in corners])
    K, L, M = coeffs[..., 0], coeffs[..., 1], coeffs[..., 2]
    bound = min(_first_positive_root(*coeffs[c, k]) for c in range(len(corners)) for k in range(t_grid))
    d = None if delta is None else float(delta)
    min_value = None if d is None else float(np.min(K * d * d + L * d + M))
    return ChipCertificate(chip.key, chip.kind, types, met, g, h, corners, ts, K[0], L, M[:, 0],
                           bound, d, min_value)


# --- trajectories -----------------------------------------------------------------


def _triangles(vertices) -> list[tuple]:
    v = [_point(p) for p in vertices]
    return [(v[0], v[k], v[k + 1]) for k in range(1, len(v) - 1)]


def sample_region(pieces, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` random points in a union of convex pieces, weighted by piece area."""
    tris = [t for p in pieces for t in _triangles(p.vertices)]
    a = np.array([[t[1][0] - t[0][0], t[1][1] - t[0][1]] for t in tris])
    b = np.array([[t[2][0] - t[0][0], t[2][1] - t[0][1]] for t in tris])
    o = np.array([t[0] for t in tris])
    area = 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    idx = rng.choice(len(tris), size=n, p=area / area.sum())
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    pts = o[idx] + (r1 * (1 - r2))[:, None] * a[idx] + (r1 * r2)[:, None] * b[idx]
    # keep starts off the coordinate axes
    return np.maximum(pts, 1e-12)


def _inside(points: np.ndarray, planes: np.ndarray, counts: np.ndarray, npieces: int) -> np.ndarray:
    inside = np.zeros(len(points), dtype=bool)
    for p in range(npieces):
        h = planes[p, : counts[p]]
        vals = points @ h[:, :2].T - h[:, 2]
        inside |= np.all(vals <= 0, axis=1)
    return inside


@dataclass(frozen=True)
class InvarianceReport:
    n_traj: int
    dt: float
    horizon: float
    seed: int
    escapes: int
    near_misses: int
    domain_exits: int
    worst_excess: float
    first_escape: tuple[int, int] | None

    @property
    def passed(self) -> bool:
        return self.escapes == 0 and self.domain_exits == 0

    def raise_on_failure(self) -> None:
        if self.first_escape is not None:
            raise InvarianceViolation(*self.first_escape)


def check_forward_invariance(sampler: FieldSampler, region: Region | Sequence, n_traj: int = 1000,
                             dt: float = 1e-3, horizon: float = 50.0, seed: int = 0,
                             strict: bool = False, starts: np.ndarray | None = None) -> InvarianceReport:
    """Integrate random starts inside the region and look for any exit.

    A state more than ``1e-9 + 10*dt*|V|`` outside the region counts as an
    escape; smaller excursions are tallied as near misses.
    """
    pieces = region.pieces if isinstance(region, Region) else tuple(region)
    if not pieces:
        raise ValueError("cannot test invariance of an empty region")
    configure_threads()
    rng = np.random.default_rng(seed)
    if starts is None:
        starts = sample_region(pieces, n_traj, rng)
    planes, counts, npieces = region_planes([pieces])
    nsteps = int(round(horizon / dt))
    first, worst, near, exited = _invariance_batch(
        np.ascontiguousarray(starts, dtype=float), float(dt), nsteps, *sampler.params,
        planes[0], counts[0], int(npieces[0]))
    escaped = np.flatnonzero(first >= 0)
    first_escape = (int(escaped[0]), int(first[escaped[0]])) if len(escaped) else None
    report = InvarianceReport(
        n_traj=len(starts),
        dt=float(dt),
        horizon=float(horizon),
        seed=int(seed),
        escapes=int(len(escaped)),
        near_misses=int(np.count_nonzero(near)),
        domain_exits=int(np.count_nonzero(exited)),
        worst_excess=float(np.max(worst)),
        first_escape=first_escape,
    )
    if strict:
        report.raise_on_failure()
    return report


# --- Morse-set localization --------------------------------------------------------


@dataclass(frozen=True)
class NodeTally:
    """Tails of runs started in ``N_A`` minus ``N_pred(A)`` for one Morse node."""

    node: int
    attractor: int
    starts: int
    tails_in_difference: int
    tails_in_predecessor: int


@dataclass(frozen=True)
class LocalizationReport:
    n_traj: int
    dt: float
    horizon: float
    seed: int
    violations: int
    first_violation: tuple[int, int, int] | None
    nodes: tuple[NodeTally, ...]
    outside_top_starts: int
    outside_top_tails_in_top: int
    domain_exits: int

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.domain_exits == 0

    def raise_on_failure(self) -> None:
        if self.first_violation is not None:
            raise OrderViolation(self.first_violation[0], self.first_violation[1])


def localize_morse_sets(sampler: FieldSampler, regions: RegionLattice, n_traj: int = 1000,
                        dt: float = 1e-3, horizon: float = 50.0, seed: int = 0,
                        tail_fraction: float = 0.5, strict: bool = False) -> LocalizationReport:
    """Check that trajectories only ever descend through the region lattice.

    Half of the runs start uniformly in the bounding box, the rest are split
    over the join-irreducible attractors and start in ``N_A`` minus
    ``N_pred(A)``.  Once a run is inside a region it must stay there.  Tails
    (the last ``tail_fraction`` of each run) of the second group are tallied
    by whether they settle in the predecessor region or stay in the difference.
    """
    configure_threads()
    rng = np.random.default_rng(seed)
    att = regions.attractors
    pieces = [r.pieces for r in regions.regions]
    planes, counts, npieces = region_planes(pieces)
    bbox = np.array(sampler.bbox)
    n_uniform = n_traj // 2
    starts = [np.maximum(rng.random((n_uniform, 2)) * bbox, 1e-12)]
    groups = []
    nodes = sorted(att.join_irreducible.items(), key=lambda kv: kv[1])
    rest = n_traj - n_uniform
    for k, (a, node) in enumerate(nodes):
        want = rest // len(nodes) + (1 if k < rest % len(nodes) else 0)
        pts = _sample_difference(pieces[a], pieces[att.pred[a]], want, rng, planes[att.pred[a]],
                                 counts[att.pred[a]], int(npieces[att.pred[a]]))
        groups.append((a, node, sum(len(s) for s in starts), len(pts)))
        starts.append(pts)
    all_starts = np.ascontiguousarray(np.concatenate(starts), dtype=float)
    nsteps = int(round(horizon / dt))
    tail_from = int(nsteps * (1 - tail_fraction))
    step, reg, tail_in, final = _order_batch(all_starts, float(dt), nsteps, tail_from, *sampler.params,
                                             planes, counts, npieces)
    bad = np.flatnonzero(step >= 0)
    first = (int(bad[0]), int(step[bad[0]]), int(reg[bad[0]])) if len(bad) else None
    tallies = []
    for a, node, offset, n in groups:
        sl = slice(offset, offset + n)
        in_pred = tail_in[sl, att.pred[a]]
        tallies.append(NodeTally(node, a, n, int(np.count_nonzero(tail_in[sl, a] & ~in_pred)),
                                 int(np.count_nonzero(in_pred))))
    top = att.lattice.top
    outside = ~_inside(all_starts[:n_uniform], planes[top], counts[top], int(npieces[top])) \
        if npieces[top] else np.ones(n_uniform, dtype=bool)
    exits = int(np.count_nonzero(~np.all(np.isfinite(final) & (final > 0), axis=1)))
    report = LocalizationReport(
        n_traj=len(all_starts),
        dt=float(dt),
        horizon=float(horizon),
        seed=int(seed),
        violations=int(len(bad)),
        first_violation=first,
        nodes=tuple(tallies),
        outside_top_starts=int(np.count_nonzero(outside)),
        outside_top_tails_in_top=int(np.count_nonzero(tail_in[:n_uniform, top] & outside)),
        domain_exits=exits,
    )
    if strict:
        report.raise_on_failure()
    return report


def _sample_difference(pieces, pred_pieces, n, rng, planes, counts, npieces) -> np.ndarray:
    """Rejection-sample ``n`` points of one union outside another (fewer if it is thin)."""
    if n == 0 or not pieces:
        return np.zeros((0, 2))
    out = []
    have = 0
    for _ in range(50):
        pts = sample_region(pieces, max(4 * n, 64), rng)
        if npieces:
            pts = pts[~_inside(pts, planes, counts, npieces)]
        out.append(pts)
        have += len(pts)
        if have >= n:
            break
    pts = np.concatenate(out)[:n]
    return pts


# --- perturbations ----------------------------------------------------------------


@dataclass(frozen=True)
class PerturbationReport:
    mode: str
    epsilon: float
    seed: int
    passed: bool
    largest_passing: float
    trials: tuple[tuple[float, bool], ...]


def _perturbation(mode: str, eps: float, rng_seed: int, region: Region, sampler: FieldSampler,
                  transversality: TransversalityReport | None):
    if mode == "aligned":
        # constant push along the outward normal at the weakest sampled point
        worst = transversality.worst if transversality is not None else None
        n = np.array([1.0, 0.0])
        if worst is not None:
            e = region.boundary[worst.loop].edges[worst.index]
            n = np.array(e.normal)
        return eps * n[None, :], np.zeros((1, 2)), np.array([math.pi / 2])
    if mode != "trig":
        raise ValueError(f"unknown perturbation mode {mode!r}")
    rng = np.random.default_rng(rng_seed)
    k = 4
    angles = rng.uniform(0, 2 * math.pi, k)
    amp = np.stack([np.cos(angles), np.sin(angles)], axis=1) * (eps / k)
    freq = rng.uniform(0.5, 3.0, (k, 2)) * rng.choice([-1.0, 1.0], (k, 2))
    phase = rng.uniform(0, 2 * math.pi, k)
    return amp, freq, phase


def perturb_and_recheck(sampler: FieldSampler, epsilon: float, region: Region, n_traj: int = 200,
                        dt: float = 1e-3, horizon: float = 20.0, seed: int = 0, mode: str = "trig",
                        samples_per_edge: int = 100, iterations: int = 8) -> PerturbationReport:
    """Add a bounded smooth perturbation and rerun the sampled checks.

    The perturbation has Euclidean size at most ``epsilon`` everywhere.  A
    trial passes when every interior edge stays strictly inward and no
    trajectory escapes.  When ``epsilon`` fails, bisection over ``[0,
    epsilon]`` finds the largest passing size.
    """
    base = check_transversality(sampler, region, samples_per_edge)

    def trial(eps: float) -> bool:
        amp, freq, phase = _perturbation(mode, eps, seed, region, sampler, base)
        s = sampler.perturbed(amp, freq, phase)
        if not check_transversality(s, region, samples_per_edge).passed:
            return False
        return check_forward_invariance(s, region, n_traj, dt, horizon, seed).passed

    trials = [(float(epsilon), trial(float(epsilon)))]
    if trials[0][1]:
        return PerturbationReport(mode, float(epsilon), seed, True, float(epsilon), tuple(trials))
    lo, hi = 0.0, float(epsilon)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        ok = trial(mid)
        trials.append((mid, ok))
        lo, hi = (mid, hi) if ok else (lo, mid)
    return PerturbationReport(mode, float(epsilon), seed, False, lo, tuple(trials))
