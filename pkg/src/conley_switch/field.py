"""Continuous realization of the switching nonlinearity and its RK4 flow.

Outside the collars of width ``2*delta`` around the thresholds the field is the
cell's production rate.  Inside a collar each axis blends linearly between the
two neighbouring cells, so the nonlinearity is constant on cell cores, linear
across a wall collar and bilinear on a grid-point square.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from numba import njit, prange

from .errors import DeltaTooLarge, DomainExit, OutOfDomain
from .switching import SwitchingSystem, to_fraction

__all__ = [
    "FieldSampler",
    "Trajectory",
    "make_fdelta",
    "vector_field",
    "integrate",
    "configure_threads",
    "THREADS_ENV",
]

THREADS_ENV = "CONLEY_SWITCH_THREADS"

# Prefer OpenMP; the TBB layer shipped on many systems is too old for numba
# and only produces a warning before falling back.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


def configure_threads() -> int:
    """Apply the ``CONLEY_SWITCH_THREADS`` cap to numba's worker pool."""
    limit = numba.config.NUMBA_NUM_THREADS
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            limit = max(1, min(limit, int(raw)))
        except ValueError:
            pass
    numba.set_num_threads(limit)
    return limit


# Inner kernels never allocate, so they are compiled without reference
# counting; passing arrays between refcounted functions costs several atomic
# operations per call, which dominates a single field evaluation.


@njit(cache=True, _nrt=False)
def _blend(x, t, delta):
    """Lower cell index along one axis and the weight of the next cell."""
    n = t.shape[0]
    k = 0
    while k < n and t[k] < x:
        k += 1
    # x lies in cell k; check the collars of the thresholds on either side
    if k > 0 and x - t[k - 1] < delta:
        return k - 1, (x - t[k - 1] + delta) / (2.0 * delta)
    if k < n and t[k] - x <= delta:
        return k, (x - t[k] + delta) / (2.0 * delta)
    return k, 0.0


@njit(cache=True, _nrt=False)
def _f(x, y, xs, ys, lam1, lam2, delta, amp, freq, phase):
    i, s = _blend(x, xs, delta)
    j, r = _blend(y, ys, delta)
    i1 = min(i + 1, lam1.shape[0] - 1)
    j1 = min(j + 1, lam1.shape[1] - 1)
    w00 = (1.0 - s) * (1.0 - r)
    w10 = s * (1.0 - r)
    w01 = (1.0 - s) * r
    w11 = s * r
    f1 = w00 * lam1[i, j] + w10 * lam1[i1, j] + w01 * lam1[i, j1] + w11 * lam1[i1, j1]
    f2 = w00 * lam2[i, j] + w10 * lam2[i1, j] + w01 * lam2[i, j1] + w11 * lam2[i1, j1]
    for m in range(amp.shape[0]):
        arg = freq[m, 0] * x + freq[m, 1] * y + phase[m]
        sn = math.sin(arg)
        f1 += amp[m, 0] * sn
        f2 += amp[m, 1] * sn
    return f1, f2


@njit(cache=True, _nrt=False)
def _v(x, y, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase):
    f1, f2 = _f(x, y, xs, ys, lam1, lam2, delta, amp, freq, phase)
    return f1 - g1 * x, f2 - g2 * y


@njit(cache=True, _nrt=False)
def _rk4_step(x, y, dt, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase):
    a1, a2 = _v(x, y, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase)
    b1, b2 = _v(x + 0.5 * dt * a1, y + 0.5 * dt * a2, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase)
    c1, c2 = _v(x + 0.5 * dt * b1, y + 0.5 * dt * b2, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase)
    d1, d2 = _v(x + dt * c1, y + dt * c2, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase)
    return (x + dt / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1),
            y + dt / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2),
            math.hypot(a1, a2))


@njit(cache=True)
def _v_points(pts, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase):
    out = np.empty_like(pts)
    for k in range(pts.shape[0]):
        a, b = _v(pts[k, 0], pts[k, 1], g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase)
        out[k, 0] = a
        out[k, 1] = b
    return out


@njit(cache=True)
def _trajectory(x0, y0, dt, nsteps, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase):
    out = np.empty((nsteps + 1, 2))
    out[0, 0] = x0
    out[0, 1] = y0
    x, y = x0, y0
    for k in range(nsteps):
        x, y, _ = _rk4_step(x, y, dt, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase)
        out[k + 1, 0] = x
        out[k + 1, 1] = y
    return out


@njit(cache=True, _nrt=False)
def _piece_excess(x, y, planes, counts, p):
    worst = -np.inf
    for h in range(counts[p]):
        d = planes[p, h, 0] * x + planes[p, h, 1] * y - planes[p, h, 2]
        if d > worst:
            worst = d
    return worst


@njit(cache=True, _nrt=False)
def _excess(x, y, planes, counts, npieces, hint):
    """Distance outside the union of pieces (<= 0 inside) and the piece attaining it.

    The piece ``hint`` (usually the one that held the previous state) is tried first.
    """
    best = _piece_excess(x, y, planes, counts, hint)
    if best <= 0.0:
        return best, hint
    arg = hint
    for p in range(npieces):
        if p == hint:
            continue
        e = _piece_excess(x, y, planes, counts, p)
        if e < best:
            best = e
            arg = p
            if best <= 0.0:
                break
    return best, arg


@njit(cache=True, parallel=True)
def _invariance_batch(starts, dt, nsteps, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase,
                      planes, counts, npieces):
    n = starts.shape[0]
    first_escape = np.full(n, -1, dtype=np.int64)
    worst = np.full(n, -np.inf)
    near = np.zeros(n, dtype=np.int64)
    exited = np.zeros(n, dtype=np.bool_)
    for t in prange(n):
        x = starts[t, 0]
        y = starts[t, 1]
        hint = 0
        for k in range(nsteps):
            x, y, speed = _rk4_step(x, y, dt, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase)
            if not (x > 0.0 and y > 0.0):
                exited[t] = True
                if first_escape[t] < 0:
                    first_escape[t] = k + 1
                break
            e, hint = _excess(x, y, planes, counts, npieces, hint)
            if e > worst[t]:
                worst[t] = e
            if e > 0.0:
                slack = 1e-9 + 10.0 * dt * speed
                if e > slack:
                    if first_escape[t] < 0:
                        first_escape[t] = k + 1
                else:
                    near[t] += 1
    return first_escape, worst, near, exited


@njit(cache=True, parallel=True)
def _order_batch(starts, dt, nsteps, tail_from, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase,
                 planes, counts, npieces):
    """Track membership in every region along each trajectory.

    A violation is recorded when a trajectory, having been inside a region,
    later sits outside it by more than the numerical slack.
    """
    n = starts.shape[0]
    nreg = planes.shape[0]
    violation_step = np.full(n, -1, dtype=np.int64)
    violation_region = np.full(n, -1, dtype=np.int64)
    tail_in = np.ones((n, nreg), dtype=np.bool_)
    final = np.empty((n, 2))
    for t in prange(n):
        x = starts[t, 0]
        y = starts[t, 1]
        entered = np.zeros(nreg, dtype=np.bool_)
        hints = np.zeros(nreg, dtype=np.int64)
        for r in range(nreg):
            if npieces[r] > 0:
                e, hints[r] = _excess(x, y, planes[r], counts[r], npieces[r], 0)
                entered[r] = e <= 0.0
        for k in range(nsteps):
            x, y, speed = _rk4_step(x, y, dt, g1, g2, xs, ys, lam1, lam2, delta, amp, freq, phase)
            slack = 1e-9 + 10.0 * dt * speed
            for r in range(nreg):
                if npieces[r] == 0:
                    if k + 1 >= tail_from:
                        tail_in[t, r] = False
                    continue
                e, hints[r] = _excess(x, y, planes[r], counts[r], npieces[r], hints[r])
                if e <= 0.0:
                    entered[r] = True
                elif entered[r] and e > slack and violation_step[t] < 0:
                    violation_step[t] = k + 1
                    violation_region[t] = r
                if k + 1 >= tail_from and e > slack:
                    tail_in[t, r] = False
        final[t, 0] = x
        final[t, 1] = y
    return violation_step, violation_region, tail_in, final


@dataclass(frozen=True)
class FieldSampler:
    """Evaluable ``f_delta`` for a system, with an optional smooth perturbation.

    The perturbation is ``sum_k amp[k] * sin(freq[k] . x + phase[k])``.
    """

    system: SwitchingSystem
    delta: float
    xs: np.ndarray = field(repr=False)
    ys: np.ndarray = field(repr=False)
    lam1: np.ndarray = field(repr=False)
    lam2: np.ndarray = field(repr=False)
    gamma: tuple[float, float]
    bbox: tuple[float, float]
    amp: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)), repr=False)
    freq: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)), repr=False)
    phase: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    scheme: str = "linear"

    @property
    def params(self) -> tuple:
        return (self.gamma[0], self.gamma[1], self.xs, self.ys, self.lam1, self.lam2, self.delta,
                self.amp, self.freq, self.phase)

    @property
    def field_params(self) -> tuple:
        return (self.xs, self.ys, self.lam1, self.lam2, self.delta, self.amp, self.freq, self.phase)

    def f(self, x) -> np.ndarray:
        return np.array(_f(float(x[0]), float(x[1]), *self.field_params))

    def __call__(self, x) -> np.ndarray:
        return self.f(x)

    def v(self, x) -> np.ndarray:
        return np.array(_v(float(x[0]), float(x[1]), *self.params))

    def v_many(self, pts) -> np.ndarray:
        return _v_points(np.ascontiguousarray(pts, dtype=float).reshape(-1, 2), *self.params)

    def perturbed(self, amp, freq, phase) -> "FieldSampler":
        return replace(self, amp=np.asarray(amp, dtype=float).reshape(-1, 2),
                       freq=np.asarray(freq, dtype=float).reshape(-1, 2),
                       phase=np.asarray(phase, dtype=float).reshape(-1), scheme="linear+perturbation")

    @property
    def perturbation_bound(self) -> float:
        """Upper bound on the Euclidean norm of the perturbation term."""
        return float(np.sum(np.hypot(self.amp[:, 0], self.amp[:, 1]))) if len(self.amp) else 0.0


def make_fdelta(sys: SwitchingSystem, delta) -> FieldSampler:
    d = to_fraction(delta)
    widths = []
    for axis in (0, 1):
        values = (0, *sys.grid.axis(axis))
        widths.extend(b - a for a, b in zip(values, values[1:]))
    if d <= 0 or (widths and d >= min(widths) / 2):
        raise DeltaTooLarge(f"delta = {d} must satisfy 0 < delta < lambda = {min(widths) / 2 if widths else 'inf'}")
    lam1 = np.empty((sys.I + 1, sys.J + 1))
    lam2 = np.empty((sys.I + 1, sys.J + 1))
    for (i, j), (a, b) in sys.lambda_table.items():
        lam1[i, j] = float(a)
        lam2[i, j] = float(b)
    return FieldSampler(
        system=sys,
        delta=float(d),
        xs=np.array([float(v) for v in sys.grid.xi], dtype=float),
        ys=np.array([float(v) for v in sys.grid.eta], dtype=float),
        lam1=lam1,
        lam2=lam2,
        gamma=(float(sys.gamma[0]), float(sys.gamma[1])),
        bbox=(float(sys.bbox[0]), float(sys.bbox[1])),
    )


def vector_field(sampler: FieldSampler, x) -> np.ndarray:
    """``V(x) = -Gamma x + f_delta(x)`` on ``(0, bbox]^2``."""
    if not (0 < x[0] <= sampler.bbox[0] and 0 < x[1] <= sampler.bbox[1]):
        raise OutOfDomain(f"{tuple(x)} lies outside (0, {sampler.bbox[0]}] x (0, {sampler.bbox[1]}]")
    return sampler.v(x)


@dataclass(frozen=True)
class Trajectory:
    x0: tuple[float, float]
    dt: float
    horizon: float
    states: np.ndarray = field(repr=False)
    exited_at: int | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def integrate(sampler: FieldSampler, x0, dt: float = 1e-3, horizon: float = 50.0,
              strict: bool = True) -> Trajectory:
    """Fixed-step RK4 samples of the flow from ``x0``.

    Leaving the open positive quadrant raises :class:`DomainExit` when
    ``strict``; otherwise the exit step is recorded on the trajectory.
    """
    if not (0 < x0[0] <= sampler.bbox[0] and 0 < x0[1] <= sampler.bbox[1]):
        raise OutOfDomain(f"initial point {tuple(x0)} outside the domain")
    if dt <= 0:
        raise ValueError("dt must be positive")
    nsteps = int(round(horizon / dt))
    states = _trajectory(float(x0[0]), float(x0[1]), float(dt), nsteps, *sampler.params)
    bad = np.flatnonzero(~((states[:, 0] > 0) & (states[:, 1] > 0)))
    exited = int(bad[0]) if len(bad) else None
    if exited is not None and strict:
        raise DomainExit(exited)
    return Trajectory((float(x0[0]), float(x0[1])), float(dt), float(horizon), states, exited)


def region_planes(pieces_list) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pack lists of pieces into normalized half-plane arrays for the kernels.

    Returns ``planes[r, p, h, 0:3]`` with unit normals, ``counts[r, p]`` and
    ``npieces[r]``.
    """
    nreg = len(pieces_list)
    maxp = max([len(p) for p in pieces_list] + [1])
    planes = np.zeros((nreg, maxp, 4, 3))
    counts = np.zeros((nreg, maxp), dtype=np.int64)
    npieces = np.zeros(nreg, dtype=np.int64)
    for r, pieces in enumerate(pieces_list):
        npieces[r] = len(pieces)
        for p, piece in enumerate(pieces):
            hps = piece.halfplanes()
            counts[r, p] = len(hps)
            for h, (a, b, c) in enumerate(hps):
                a, b, c = float(a), float(b), float(c)
                norm = math.hypot(a, b)
                planes[r, p, h] = (a / norm, b / norm, c / norm)
    return planes, counts, npieces
