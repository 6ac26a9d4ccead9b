"""Tiles, chips and trapping regions built from forward-invariant vertex sets.

For a collar width ``delta`` the plane splits into cell cores (``G2``), wall
collars (``G1``) and grid-point squares (``G0``).  A region is the union of the
tiles and triangular chips produced by the local Rules 0-5, applied around
every grid point until nothing changes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable

from .errors import (
    DeltaTooLarge,
    InvalidIncidence,
    LatticePropertyViolation,
    NoFiniteThreshold,
)
from .geometry import BoundaryEdge, BoundaryLoop, Piece, covers, rectangle, union_boundary
from .order import AttractorLattice, forward_invariant_core
from .stg import Face, Role, TransitionGraph, VertexColor, assert_no_black, vertex_color
from .switching import CellType, SwitchingSystem, derived_constants, to_fraction

__all__ = [
    "TileComplex",
    "Chip",
    "ElementaryDomain",
    "Region",
    "RegionLattice",
    "build_tiles",
    "make_chip",
    "build_region",
    "normalize_inventory",
    "region_lattice",
    "region_boundary",
    "elementary_domains",
    "chip_frame",
]

Cell = tuple[int, int]
GridPoint = tuple[int, int]

NARROW = "narrow"
WIDE = "wide"

# Quadrant of a cell around a grid point (sign of x, sign of y).
QUADRANTS = {"NE": (1, 1), "NW": (-1, 1), "SW": (-1, -1), "SE": (1, -1)}


def g2(cell: Cell) -> tuple:
    return ("G2", cell)


def g1(wall: Face) -> tuple:
    return ("G1", wall)


def g0(point: GridPoint) -> tuple:
    return ("G0", point)


def chip_key(kind: str, cell: Cell, wall: Face, point: GridPoint) -> tuple:
    return ("Cn" if kind == NARROW else "Cw", (cell, wall, point))


@dataclass(frozen=True)
class TileComplex:
    """All tiles for one collar width, keyed as ``("G2", cell)``, ``("G1", wall)``, ``("G0", point)``."""

    system: SwitchingSystem
    delta: Fraction
    tiles: dict[tuple, Piece] = field(repr=False)

    def __getitem__(self, key) -> Piece:
        return self.tiles[key]

    def __contains__(self, key) -> bool:
        return key in self.tiles

    def grid_points(self) -> list[GridPoint]:
        return sorted(k[1] for k in self.tiles if k[0] == "G0")


def _core_range(sys: SwitchingSystem, axis: int, k: int, delta: Fraction) -> tuple[Fraction, Fraction]:
    lo, hi = sys.extent((k, k), axis)
    lo = lo + delta if k > 0 else Fraction(0)
    hi = sys.bbox[axis] if hi is None else hi - delta
    return lo, hi


def _lambda_bound(sys: SwitchingSystem) -> Fraction | None:
    widths = []
    for axis in (0, 1):
        values = (Fraction(0), *sys.grid.axis(axis))
        widths.extend(b - a for a, b in zip(values, values[1:]))
    return min(widths) / 2 if widths else None


def build_tiles(sys: SwitchingSystem, delta) -> TileComplex:
    """Every ``G2``, every interior-wall ``G1`` and every interior grid-point ``G0``.

    Tiles in the bottom row and left column reach down to 0; unbounded sides
    stop at the bounding box.
    """
    delta = to_fraction(delta)
    lam = _lambda_bound(sys)
    if delta <= 0:
        raise DeltaTooLarge(f"delta must be positive, got {delta}")
    if lam is not None and delta >= lam:
        raise DeltaTooLarge(f"delta = {delta} must satisfy delta < lambda = {lam} (half the smallest cell width)")
    if lam is not None:
        star = derived_constants(sys).delta_star
        if delta >= star:
            warnings.warn(f"delta = {float(delta):.6g} is not below delta* = {star:.6g}; "
                          "transversality is not guaranteed", stacklevel=2)
    tiles: dict[tuple, Piece] = {}
    xr = [_core_range(sys, 0, i, delta) for i in range(sys.I + 1)]
    yr = [_core_range(sys, 1, j, delta) for j in range(sys.J + 1)]
    for i, j in sys.cells():
        tiles[g2((i, j))] = rectangle(g2((i, j)), *xr[i], *yr[j])
    for k in range(1, sys.I + 1):
        x = sys.grid.xi[k - 1]
        for j in range(sys.J + 1):
            w = Face.wall(0, k, j)
            tiles[g1(w)] = rectangle(g1(w), x - delta, x + delta, *yr[j])
    for k in range(1, sys.J + 1):
        y = sys.grid.eta[k - 1]
        for i in range(sys.I + 1):
            w = Face.wall(1, k, i)
            tiles[g1(w)] = rectangle(g1(w), *xr[i], y - delta, y + delta)
    for i in range(1, sys.I + 1):
        for j in range(1, sys.J + 1):
            x, y = sys.grid.xi[i - 1], sys.grid.eta[j - 1]
            tiles[g0((i, j))] = rectangle(g0((i, j)), x - delta, x + delta, y - delta, y + delta)
    return TileComplex(sys, delta, tiles)


# --- grid-point neighbourhoods -------------------------------------------------


def cells_at(point: GridPoint) -> dict[str, Cell]:
    i, j = point
    return {"NE": (i, j), "NW": (i - 1, j), "SW": (i - 1, j - 1), "SE": (i, j - 1)}


def walls_at(point: GridPoint) -> dict[str, Face]:
    """The four half-walls meeting at an interior grid point, by compass direction."""
    i, j = point
    return {
        "N": Face.wall(0, i, j),
        "S": Face.wall(0, i, j - 1),
        "E": Face.wall(1, j, i),
        "W": Face.wall(1, j, i - 1),
    }


# walls of each quadrant cell that end at the grid point
CELL_WALLS = {"NE": ("N", "E"), "NW": ("N", "W"), "SW": ("S", "W"), "SE": ("S", "E")}
# the cell across each wall from each quadrant
ACROSS = {
    ("NE", "N"): "NW", ("NW", "N"): "NE",
    ("NE", "E"): "SE", ("SE", "E"): "NE",
    ("SW", "W"): "NW", ("NW", "W"): "SW",
    ("SW", "S"): "SE", ("SE", "S"): "SW",
}
WALL_DIRECTION = {"N": (0, 1), "S": (0, -1), "E": (1, 0), "W": (-1, 0)}


@dataclass(frozen=True)
class ChipFrame:
    """Dihedral map carrying the canonical chip position to an actual incidence.

    Canonically the chip cell is the north-east cell of the grid point and the
    wall runs east from it.  ``to_actual`` maps canonical offsets to actual
    offsets from the grid point.
    """

    quadrant: str
    wall: str
    swap: bool
    sx: int
    sy: int

    def to_actual(self, u, w):
        if self.swap:
            return self.sx * w, self.sy * u
        return self.sx * u, self.sy * w

    def type_to_canonical(self, t: CellType) -> CellType:
        dx, dy = t.offsets
        if self.swap:
            return CellType.from_offsets(dy * self.sy, dx * self.sx)
        return CellType.from_offsets(dx * self.sx, dy * self.sy)


def chip_frame(point: GridPoint, cell: Cell, wall: Face) -> ChipFrame:
    quads = {c: q for q, c in cells_at(point).items()}
    walls = {w: d for d, w in walls_at(point).items()}
    if cell not in quads or wall not in walls or walls[wall] not in CELL_WALLS[quads[cell]]:
        raise InvalidIncidence(f"wall {wall} of cell {cell} does not end at grid point {point}")
    q, d = quads[cell], walls[wall]
    sx, sy = QUADRANTS[q]
    return ChipFrame(q, d, swap=d in ("N", "S"), sx=sx, sy=sy)


@dataclass(frozen=True)
class Chip:
    kind: str
    cell: Cell
    wall: Face
    point: GridPoint
    vertices: tuple[tuple[Fraction, Fraction], ...]
    half_width: Fraction

    @property
    def key(self) -> tuple:
        return chip_key(self.kind, self.cell, self.wall, self.point)

    @property
    def piece(self) -> Piece:
        return Piece(self.key, self.vertices)

    @property
    def hypotenuse(self) -> tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]:
        return self.vertices[0], self.vertices[2]


def chip_half_width(sys: SwitchingSystem, cell: Cell, wall: Face) -> Fraction:
    """Half the cell's width along the wall; ``lambda`` stands in for unbounded cells."""
    axis = 1 - wall.axis
    lo, hi = sys.extent(cell, axis)
    if hi is None:
        return _lambda_bound(sys)
    return (hi - lo) / 2


def make_chip(kind: str, cell: Cell, wall: Face, point: GridPoint, tiles: TileComplex) -> Chip:
    """Right triangle in the collar of ``wall`` with legs on ``G2(cell)`` and ``G0(point)``.

    The canonical narrow chip has corners ``(d, 0)``, ``(d, d)``, ``(a/2, d)``
    and the wide one ``(d, -d)``, ``(d, d)``, ``(a/2, d)`` relative to the
    grid point; the first and last corners bound the hypotenuse.
    """
    if kind not in (NARROW, WIDE):
        raise ValueError(f"unknown chip kind {kind!r}")
    sys = tiles.system
    if g0(point) not in tiles:
        raise InvalidIncidence(f"grid point {point} is not interior")
    frame = chip_frame(point, cell, wall)
    d = tiles.delta
    h = chip_half_width(sys, cell, wall)
    canonical = [(d, Fraction(0) if kind == NARROW else -d), (d, d), (h, d)]
    px, py = sys.grid.xi[point[0] - 1], sys.grid.eta[point[1] - 1]
    verts = [(px + ox, py + oy) for ox, oy in (frame.to_actual(u, w) for u, w in canonical)]
    return Chip(kind, cell, wall, point, tuple(_ccw(verts)), h)


def _signed_area(v) -> Fraction:
    return ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])) / 2


def _ccw(v):
    # keep the hypotenuse endpoints first and last, right-angle corner in the middle
    if _signed_area(v) > 0:
        return v
    return [v[2], v[1], v[0]]


# --- elementary domains ----------------------------------------------------------


@dataclass(frozen=True)
class ElementaryDomain:
    """Open window around the grid point ``(xi_i, eta_j)`` (which may lie on an axis).

    Windows of unbounded cells are extended past the bounding box.
    ``vertices`` are the half-walls through the point plus the points of
    attracting cells around it; ``closure`` adds every face of those cells.
    """

    index: GridPoint
    x_range: tuple[Fraction, Fraction]
    y_range: tuple[Fraction, Fraction]
    vertices: frozenset[Face]
    closure: frozenset[Face]

    def meets_segment(self, p, q) -> bool:
        """Whether the closed segment ``pq`` meets the open rectangle."""
        t0, t1 = Fraction(0), Fraction(1)
        for axis, (lo, hi) in enumerate((self.x_range, self.y_range)):
            a, d = p[axis], q[axis] - p[axis]
            if d == 0:
                if a <= lo or a >= hi:
                    return False
                continue
            ta, tb = (lo - a) / d, (hi - a) / d
            lo_t, hi_t = min(ta, tb), max(ta, tb)
            t0, t1 = max(t0, lo_t), min(t1, hi_t)
        return t0 < t1


def elementary_domains(source: TransitionGraph | SwitchingSystem, delta) -> list[ElementaryDomain]:
    """Windows around every grid point, lexicographic by index.

    Given only a system (no transition graph) the vertex sets are left empty.
    """
    stg = source if isinstance(source, TransitionGraph) else None
    sys = stg.system if stg is not None else source
    delta = to_fraction(delta)
    out = []

    def rng(axis, k):
        values = (Fraction(0), *sys.grid.axis(axis))
        lo = values[k - 1] + delta if k >= 1 else Fraction(0)
        # unbounded windows extend past the bounding box
        hi = values[k + 1] - delta if k + 1 < len(values) else 2 * sys.bbox[axis]
        return lo, hi

    for i in range(sys.I + 1):
        for j in range(sys.J + 1):
            around = [c for c in ((i, j), (i - 1, j), (i - 1, j - 1), (i, j - 1)) if sys.has_cell(c)]
            half = {Face.wall(0, i, j), Face.wall(0, i, j - 1), Face.wall(1, j, i), Face.wall(1, j, i - 1)}
            verts: set[Face] = set()
            closure: set[Face] = set()
            if stg is not None:
                verts = {v for v in half if v in stg.incidence}
                verts |= {Face.point(c) for c in around if Face.point(c) in stg.incidence}
                closure = set(verts)
                for c in around:
                    closure |= {f for f in stg.vertices if any(cc == c for cc, _ in stg.incidence[f])}
            out.append(ElementaryDomain((i, j), rng(0, i), rng(1, j), frozenset(verts), frozenset(closure)))
    return out


# --- rules ----------------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Trapping region for a forward-invariant vertex set: its tiles and chips."""

    vertices: frozenset[Face]
    core: frozenset[Face]
    inventory: frozenset[tuple]
    tiles: TileComplex = field(repr=False, compare=False)

    @cached_property
    def chips(self) -> dict[tuple, Chip]:
        out = {}
        for key in self.inventory:
            if key[0] in ("Cn", "Cw"):
                cell, wall, point = key[1]
                out[key] = make_chip(NARROW if key[0] == "Cn" else WIDE, cell, wall, point, self.tiles)
        return out

    @cached_property
    def pieces(self) -> tuple[Piece, ...]:
        out = []
        for key in sorted(self.inventory, key=_key_order):
            out.append(self.chips[key].piece if key in self.chips else self.tiles[key])
        return tuple(out)

    @cached_property
    def boundary(self) -> list[BoundaryLoop]:
        return union_boundary(self.pieces)

    @property
    def is_empty(self) -> bool:
        return not self.inventory

    def counts(self) -> dict[str, int]:
        out = {"G2": 0, "G1": 0, "G0": 0, "Cn": 0, "Cw": 0}
        for key in self.inventory:
            out[key[0]] += 1
        return out

    def without(self, key) -> "Region":
        """Copy with one inventory element removed (used to probe sensitivity)."""
        return Region(self.vertices, self.core, self.inventory - {key}, self.tiles)


_KIND_ORDER = {"G2": 0, "G1": 1, "G0": 2, "Cw": 3, "Cn": 4}


def _key_order(key):
    return _KIND_ORDER[key[0]], key[1]


def normalize_inventory(inventory: Iterable[tuple]) -> frozenset[tuple]:
    """Drop chips already covered by a wide chip or by their wall's collar tile."""
    inv = set(inventory)
    for key in list(inv):
        if key[0] == "Cn":
            cell, wall, point = key[1]
            if g1(wall) in inv or chip_key(WIDE, cell, wall, point) in inv:
                inv.discard(key)
        elif key[0] == "Cw":
            if g1(key[1][1]) in inv:
                inv.discard(key)
    return frozenset(inv)


class _RuleEngine:
    def __init__(self, stg: TransitionGraph, tiles: TileComplex, core: frozenset[Face]):
        self.stg = stg
        self.sys = stg.system
        self.tiles = tiles
        self.core = core
        self.inv: set[tuple] = set()
        self.points = tiles.grid_points()

    def add(self, key) -> bool:
        if key in self.inv:
            return False
        self.inv.add(key)
        return True

    def absorbing(self, cell: Cell, wall: Face) -> bool:
        return self.stg.role(cell, wall) is Role.ABSORBING

    def rule0(self) -> bool:
        changed = False
        for v in sorted(self.core):
            if v.is_point:
                changed |= self.add(g2(v.cell))
        return changed

    def rule1(self) -> bool:
        changed = False
        for v in sorted(self.core):
            if v.is_wall and vertex_color(self.stg, v) is VertexColor.TRANSPARENT:
                for cell, _ in self.stg.incidence[v]:
                    changed |= self.add(g2(cell))
                changed |= self.add(g1(v))
        return changed

    def rule2(self, point) -> bool:
        cells, walls, inv = cells_at(point), walls_at(point), self.inv
        for beta, (wa, wb) in CELL_WALLS.items():
            alpha, gamma = ACROSS[(beta, wa)], ACROSS[(beta, wb)]
            needed = [g2(cells[alpha]), g2(cells[beta]), g2(cells[gamma]), g1(walls[wa]), g1(walls[wb])]
            if all(k in inv for k in needed) and (
                self.absorbing(cells[beta], walls[wa]) or self.absorbing(cells[beta], walls[wb])
            ):
                return self.add(g0(point))
        return False

    def rule3(self, point) -> bool:
        cells, walls, inv = cells_at(point), walls_at(point), self.inv
        changed = False
        if g0(point) not in inv:
            return False
        for q, pair in CELL_WALLS.items():
            cell = cells[q]
            if g2(cell) not in inv:
                continue
            if any(self.absorbing(cell, walls[w]) for w in pair):
                continue
            for have, other in (pair, pair[::-1]):
                if g1(walls[have]) in inv:
                    changed |= self.add(chip_key(NARROW, cell, walls[other], point))
        return changed

    def rule4(self, point) -> bool:
        cells, walls, inv = cells_at(point), walls_at(point), self.inv
        changed = False
        if g0(point) not in inv:
            return False
        for q, pair in CELL_WALLS.items():
            alpha = cells[q]
            if g2(alpha) in inv:
                continue
            for wb, wg in (pair, pair[::-1]):
                if not self.absorbing(alpha, walls[wb]):
                    gamma = cells[ACROSS[(q, wg)]]
                    changed |= self.add(chip_key(WIDE, gamma, walls[wg], point))
        return changed

    def rule5(self, point) -> bool:
        cells, walls, inv = cells_at(point), walls_at(point), self.inv
        changed = False
        if g0(point) not in inv:
            return False
        for (qa, w), qb in ACROSS.items():
            if qa > qb:
                continue
            a, b = cells[qa], cells[qb]
            if g2(a) not in inv or g2(b) not in inv:
                continue
            if all(not self.absorbing(c, walls[x]) for c, q in ((a, qa), (b, qb)) for x in CELL_WALLS[q]):
                changed |= self.add(g1(walls[w]))
        return changed

    def run(self) -> frozenset[tuple]:
        while True:
            changed = self.rule0()
            changed |= self.rule1()
            for rule in (self.rule2, self.rule3, self.rule4, self.rule5):
                for point in self.points:
                    changed |= rule(point)
            if not changed:
                return normalize_inventory(self.inv)


def build_region(stg: TransitionGraph, tiles: TileComplex, vertices: Iterable[Face]) -> Region:
    """Trapping region for a forward-invariant vertex set.

    Rules 0 and 1 place cores and collars for attracting-cell points and
    transparent walls of the set's core; Rules 2-5 then fill grid-point
    squares, chips and further collars around interior grid points until a
    fixed point is reached.
    """
    assert_no_black(stg)
    vertices = frozenset(vertices)
    core = forward_invariant_core(stg, vertices)
    inventory = _RuleEngine(stg, tiles, core).run()
    return Region(vertices, core, inventory, tiles)


def region_boundary(region: Region) -> list[BoundaryLoop]:
    return region.boundary


def edge_domains(edge: BoundaryEdge, domains: list[ElementaryDomain], sys: SwitchingSystem) -> list[GridPoint]:
    """Elementary domains the edge is interior to; empty for edges on the outer box."""
    if on_outer_boundary(edge, sys):
        return []
    return [d.index for d in domains if d.meets_segment(edge.start, edge.end)]


def on_outer_boundary(edge: BoundaryEdge, sys: SwitchingSystem) -> bool:
    for axis in (0, 1):
        a, b = edge.start[axis], edge.end[axis]
        if a == b and (a == 0 or a == sys.bbox[axis]):
            return True
    return False


# --- lattice of regions -----------------------------------------------------------


@dataclass(frozen=True)
class RegionLattice:
    attractors: AttractorLattice
    regions: tuple[Region, ...]

    def region(self, index: int) -> Region:
        return self.regions[index]

    @property
    def top(self) -> Region:
        return self.regions[self.attractors.lattice.top]


def region_lattice(stg: TransitionGraph, tiles: TileComplex, attractors: AttractorLattice,
                   check: bool = True) -> RegionLattice:
    """One region per attractor; optionally verify join and meet compatibility.

    The region of a join must equal the union of the two inventories (after
    chip subsumption) and the region of a meet must lie inside both regions.
    """
    lattice = attractors.lattice
    regions = tuple(build_region(stg, tiles, a) for a in lattice.elements)
    if check:
        n = len(lattice)
        for a in range(n):
            for b in range(a + 1, n):
                joined = regions[lattice.join[a, b]].inventory
                union = normalize_inventory(regions[a].inventory | regions[b].inventory)
                if joined != union:
                    raise LatticePropertyViolation(
                        {"pair": (a, b), "join_only": sorted(joined - union, key=_key_order),
                         "union_only": sorted(union - joined, key=_key_order)})
                meet = regions[lattice.meet[a, b]]
                for r in (regions[a], regions[b]):
                    if not covers(r.pieces, meet.pieces):
                        raise LatticePropertyViolation({"pair": (a, b), "meet_not_contained_in": sorted(r.inventory, key=_key_order)})
    return RegionLattice(attractors, regions)


def require_thresholds(sys: SwitchingSystem) -> None:
    if _lambda_bound(sys) is None:
        raise NoFiniteThreshold("the system has no finite threshold")
