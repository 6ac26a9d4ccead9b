"""Exact rational geometry for unions of convex polygons.

Pieces are convex polygons given by counter-clockwise vertex lists of
``Fraction`` pairs.  The boundary of a union is found on the arrangement of all
piece edges: each elementary segment is kept when exactly one of its sides is
covered, oriented so the union lies on its left.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

from .errors import DegenerateGeometry

Point = tuple[Fraction, Fraction]

__all__ = [
    "Piece",
    "BoundaryEdge",
    "BoundaryLoop",
    "rectangle",
    "polygon_area",
    "clip_convex",
    "union_boundary",
    "covers",
    "union_area",
]


def _sub(p: Point, q: Point) -> Point:
    return p[0] - q[0], p[1] - q[1]


def _cross(u: Point, v: Point) -> Fraction:
    return u[0] * v[1] - u[1] * v[0]


def _dot(u: Point, v: Point) -> Fraction:
    return u[0] * v[0] + u[1] * v[1]


def polygon_area(vertices: Sequence[Point]) -> Fraction:
    n = len(vertices)
    twice = sum((_cross(vertices[k], vertices[(k + 1) % n]) for k in range(n)), Fraction(0))
    return twice / 2


@dataclass(frozen=True)
class Piece:
    """A closed convex polygon tagged with the inventory key it came from."""

    key: Hashable
    vertices: tuple[Point, ...]

    def __post_init__(self):
        if polygon_area(self.vertices) <= 0:
            raise DegenerateGeometry(f"piece {self.key} is empty or clockwise: {self.vertices}")

    @property
    def edges(self) -> list[tuple[Point, Point]]:
        v = self.vertices
        return [(v[k], v[(k + 1) % len(v)]) for k in range(len(v))]

    def halfplanes(self) -> list[tuple[Fraction, Fraction, Fraction]]:
        """Inequalities ``a x + b y <= c`` whose intersection is the piece."""
        out = []
        for p, q in self.edges:
            d = _sub(q, p)
            a, b = d[1], -d[0]  # outward normal of a counter-clockwise edge
            out.append((a, b, a * p[0] + b * p[1]))
        return out

    def contains(self, x: Point) -> bool:
        return all(a * x[0] + b * x[1] <= c for a, b, c in self.halfplanes())

    def covers_side(self, x: Point, n: Point) -> bool:
        """Whether ``x + eps*n`` lies in the piece for all small ``eps > 0``."""
        for a, b, c in self.halfplanes():
            s = a * x[0] + b * x[1]
            if s > c or (s == c and a * n[0] + b * n[1] >= 0):
                return False
        return True

    @property
    def area(self) -> Fraction:
        return polygon_area(self.vertices)

    def bounds(self) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        xs = [p[0] for p in self.vertices]
        ys = [p[1] for p in self.vertices]
        return min(xs), max(xs), min(ys), max(ys)


def rectangle(key, x0, x1, y0, y1) -> Piece:
    return Piece(key, ((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def clip_convex(subject: Sequence[Point], clip: Piece) -> list[Point]:
    """Intersection of a convex polygon with a convex piece (Sutherland-Hodgman)."""
    out = list(subject)
    for a, b, c in clip.halfplanes():
        if not out:
            break
        out = _clip_halfplane(out, a, b, c)
    return out


def union_area(pieces: Sequence[Piece]) -> Fraction:
    """Exact area of a union: each piece contributes the part no earlier piece covers."""
    return sum((_uncovered_area(p, pieces[:k]) for k, p in enumerate(pieces)), Fraction(0))


def _uncovered_area(piece: Piece, others: Sequence[Piece]) -> Fraction:
    # Decompose ``piece`` minus the others into convex cells by successive
    # half-plane splits; exact for convex pieces.
    cells = [list(piece.vertices)]
    for other in others:
        nxt = []
        for cell in cells:
            nxt.extend(_subtract(cell, other))
        cells = nxt
        if not cells:
            break
    return sum((polygon_area(c) for c in cells if len(c) >= 3), Fraction(0))


def _subtract(cell: list[Point], other: Piece) -> list[list[Point]]:
    """Convex parts of ``cell`` outside ``other``."""
    parts = []
    remaining = cell
    for a, b, c in other.halfplanes():
        if len(remaining) < 3:
            break
        outside = _clip_halfplane(remaining, -a, -b, -c)
        if len(outside) >= 3 and polygon_area(outside) > 0:
            parts.append(outside)
        remaining = _clip_halfplane(remaining, a, b, c)
    return parts


def _clip_halfplane(poly: list[Point], a, b, c) -> list[Point]:
    out = []
    for k, p in enumerate(poly):
        q = poly[(k + 1) % len(poly)]
        fp = a * p[0] + b * p[1] - c
        fq = a * q[0] + b * q[1] - c
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def covers(container: Sequence[Piece], contained: Sequence[Piece]) -> bool:
    """Exact point-set inclusion of one closed union of pieces in another."""
    for piece in contained:
        if _uncovered_area(piece, container) != 0:
            return False
    return True


@dataclass(frozen=True)
class BoundaryEdge:
    """A maximal straight run of the union's boundary, union on the left.

    ``sources`` lists ``(piece key, start, end)`` for each elementary part so
    callers can recover which tile or chip edge it came from.
    """

    start: Point
    end: Point
    sources: tuple[tuple[Hashable, Point, Point], ...] = field(repr=False)

    @property
    def direction(self) -> Point:
        return _sub(self.end, self.start)

    @property
    def normal(self) -> tuple[float, float]:
        """Outward unit normal (the union lies to the left of the edge)."""
        dx, dy = self.direction
        length = math.hypot(float(dx), float(dy))
        return float(dy) / length, -float(dx) / length

    @property
    def axis_aligned(self) -> bool:
        dx, dy = self.direction
        return dx == 0 or dy == 0

    @property
    def length(self) -> float:
        dx, dy = self.direction
        return math.hypot(float(dx), float(dy))


@dataclass(frozen=True)
class BoundaryLoop:
    edges: tuple[BoundaryEdge, ...]

    @property
    def signed_area(self) -> Fraction:
        return polygon_area([e.start for e in self.edges])


def _split_points(seg: tuple[Point, Point], others: Iterable[tuple[Point, Point]]) -> list[Fraction]:
    """Parameters in (0, 1) where other segments touch ``seg``."""
    p, q = seg
    d = _sub(q, p)
    dd = _dot(d, d)
    ts = set()
    for r, s in others:
        e = _sub(s, r)
        denom = _cross(d, e)
        if denom == 0:
            if _cross(d, _sub(r, p)) != 0:
                continue
            for x in (r, s):
                t = _dot(_sub(x, p), d) / dd
                if 0 < t < 1:
                    ts.add(t)
            continue
        w = _sub(r, p)
        t = _cross(w, e) / denom
        u = _cross(w, d) / denom
        if 0 <= u <= 1 and 0 < t < 1:
            ts.add(t)
    return sorted(ts)


def _boxes_touch(a, b) -> bool:
    return not (max(a[0][0], a[1][0]) < min(b[0][0], b[1][0]) or max(b[0][0], b[1][0]) < min(a[0][0], a[1][0])
                or max(a[0][1], a[1][1]) < min(b[0][1], b[1][1])
                or max(b[0][1], b[1][1]) < min(a[0][1], a[1][1]))


def _turn_key(incoming: Point, outgoing: Point) -> float:
    """Counter-clockwise turn angle in (-pi, pi]; larger means a sharper left turn."""
    a = math.atan2(float(_cross(incoming, outgoing)), float(_dot(incoming, outgoing)))
    return a if a > -math.pi else math.pi


def union_boundary(pieces: Sequence[Piece]) -> list[BoundaryLoop]:
    """Oriented boundary loops of the union of ``pieces``.

    Outer loops run counter-clockwise and holes clockwise.  Where two parts of
    the union touch at a single point, each loop keeps turning left so the
    loops stay simple.
    """
    if not pieces:
        return []
    all_edges = [(piece.key, e) for piece in pieces for e in piece.edges]
    elementary: dict[tuple[Point, Point], list[Hashable]] = defaultdict(list)
    for key, seg in all_edges:
        near = [e for _, e in all_edges if e is not seg and _boxes_touch(seg, e)]
        ts = [Fraction(0), *_split_points(seg, near), Fraction(1)]
        p, q = seg
        pts = [(p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])) for t in ts]
        for a, b in zip(pts, pts[1:]):
            elementary[(a, b) if a < b else (b, a)].append(key)

    directed: list[tuple[Point, Point, tuple]] = []
    for (a, b), keys in elementary.items():
        d = _sub(b, a)
        mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        left_n = (-d[1], d[0])
        right_n = (d[1], -d[0])
        left = any(pc.covers_side(mid, left_n) for pc in pieces)
        right = any(pc.covers_side(mid, right_n) for pc in pieces)
        if not left and not right:
            raise DegenerateGeometry(f"segment {a}-{b} borders no piece")
        if left == right:
            continue
        src = tuple(sorted(set(keys), key=repr))
        directed.append((a, b, src) if left else (b, a, src))

    outgoing: dict[Point, list[int]] = defaultdict(list)
    for k, (a, _, _) in enumerate(directed):
        outgoing[a].append(k)
    used = [False] * len(directed)
    loops = []
    for start in sorted(range(len(directed)), key=lambda k: (directed[k][0], directed[k][1])):
        if used[start]:
            continue
        chain = []
        k = start
        while not used[k]:
            used[k] = True
            chain.append(directed[k])
            a, b, _ = directed[k]
            choices = [m for m in outgoing[b] if not used[m] or m == start]
            if not choices:
                raise DegenerateGeometry(f"boundary does not close at {b}")
            d_in = _sub(b, a)
            k = max(choices, key=lambda m: _turn_key(d_in, _sub(directed[m][1], directed[m][0])))
            if k == start:
                break
        loops.append(BoundaryLoop(_merge_collinear(chain)))
    return loops


def _merge_collinear(chain: list[tuple[Point, Point, tuple]]) -> tuple[BoundaryEdge, ...]:
    groups: list[list[tuple[Point, Point, tuple]]] = []
    for seg in chain:
        if groups:
            a, b, _ = groups[-1][-1]
            if _cross(_sub(b, a), _sub(seg[1], seg[0])) == 0:
                groups[-1].append(seg)
                continue
        groups.append([seg])
    if len(groups) > 1:
        a, b, _ = groups[-1][-1]
        c, d, _ = groups[0][0]
        if _cross(_sub(b, a), _sub(d, c)) == 0:
            groups[0] = groups.pop() + groups[0]
    # rotate so the loop starts at its lexicographically least corner
    edges = [
        BoundaryEdge(g[0][0], g[-1][1], tuple((key, a, b) for a, b, keys in g for key in keys))
        for g in groups
    ]
    first = min(range(len(edges)), key=lambda k: edges[k].start)
    return tuple(edges[first:] + edges[:first])
