"""Faces, per-cell graphs and the glued state transition diagram.

Vertices are walls (open segments between grid points, including the outer
walls at 0 and at infinity) and one point per attracting cell.  Within a cell
the flow carries every entrance face to every absorbing face; gluing the
per-cell graphs along shared walls gives the state transition diagram.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .errors import BlackVertexPresent, InvalidIncidence
from .switching import CellType, SwitchingSystem, classify_cell

__all__ = [
    "Face",
    "Role",
    "VertexColor",
    "TransitionGraph",
    "faces_of",
    "face_role",
    "cell_graph",
    "build_stg",
    "vertex_color",
    "assert_no_black",
]

Cell = tuple[int, int]

WALL = 0
POINT = 1


@dataclass(frozen=True, order=True)
class Face:
    """A wall or the distinguished point of an attracting cell.

    For walls, ``axis`` is the coordinate the wall is normal to: ``axis=0`` is a
    vertical wall at threshold ``index`` of the first axis spanning row
    ``strip``; ``axis=1`` is a horizontal wall at threshold ``index`` of the
    second axis spanning column ``strip``.  Points use ``index=i``, ``strip=j``.
    """

    kind: int
    axis: int
    index: int
    strip: int

    @classmethod
    def wall(cls, axis: int, index: int, strip: int) -> "Face":
        return cls(WALL, axis, index, strip)

    @classmethod
    def point(cls, cell: Cell) -> "Face":
        return cls(POINT, 0, cell[0], cell[1])

    @property
    def is_wall(self) -> bool:
        return self.kind == WALL

    @property
    def is_point(self) -> bool:
        return self.kind == POINT

    @property
    def cell(self) -> Cell:
        if not self.is_point:
            raise AttributeError("only cell points carry a single cell")
        return self.index, self.strip

    def cells(self) -> tuple[Cell, Cell]:
        """The cells on the low and high side of a wall (may lie outside the grid)."""
        if self.axis == 0:
            return (self.index - 1, self.strip), (self.index, self.strip)
        return (self.strip, self.index - 1), (self.strip, self.index)

    @property
    def label(self) -> str:
        if self.is_point:
            return f"w({self.index},{self.strip})"
        return f"{'V' if self.axis == 0 else 'H'}({self.index},{self.strip})"

    def __str__(self) -> str:
        return self.label


class Role(str, enum.Enum):
    ENTRANCE = "entrance"
    ABSORBING = "absorbing"


class VertexColor(str, enum.Enum):
    MINIMAL = "Minimal"
    TRANSPARENT = "Transparent"
    BLACK = "Black"
    WHITE = "White"


def cell_walls(cell: Cell) -> dict[str, Face]:
    i, j = cell
    return {
        "left": Face.wall(0, i, j),
        "right": Face.wall(0, i + 1, j),
        "bottom": Face.wall(1, j, i),
        "top": Face.wall(1, j + 1, i),
    }


def faces_of(sys: SwitchingSystem, cell: Cell) -> list[Face]:
    """The four walls of ``cell``, plus its point when the cell is attracting."""
    faces = list(cell_walls(cell).values())
    if classify_cell(sys, cell) is CellType.A:
        faces.append(Face.point(cell))
    return faces


def incident_cells(sys: SwitchingSystem, face: Face) -> list[Cell]:
    if face.is_point:
        return [face.cell]
    return [c for c in face.cells() if sys.has_cell(c)]


def face_role(sys: SwitchingSystem, cell: Cell, face: Face) -> Role:
    if face.is_point:
        if face.cell != cell or classify_cell(sys, cell) is not CellType.A:
            raise InvalidIncidence(f"{face} is not a face of cell {cell}")
        return Role.ABSORBING
    low, high = face.cells()
    if cell not in (low, high) or not sys.has_cell(cell):
        raise InvalidIncidence(f"{face} is not a face of cell {cell}")
    phi = sys.focal(cell)[face.axis]
    threshold = sys.grid.threshold(face.axis, face.index)
    if cell == high:
        # the wall is the cell's lower side: flow enters if the focal point lies beyond it
        return Role.ENTRANCE if phi > threshold else Role.ABSORBING
    if threshold is None:
        return Role.ENTRANCE
    return Role.ENTRANCE if phi < threshold else Role.ABSORBING


def cell_graph(sys: SwitchingSystem, cell: Cell) -> list[tuple[Face, Face]]:
    """Edges of the local graph of ``cell``: every entrance face to every absorbing face."""
    faces = faces_of(sys, cell)
    roles = {f: face_role(sys, cell, f) for f in faces}
    entrances = [f for f in faces if roles[f] is Role.ENTRANCE]
    absorbing = [f for f in faces if roles[f] is Role.ABSORBING]
    edges = [(u, v) for u in entrances for v in absorbing]
    edges.extend((v, v) for v in absorbing if v.is_point)
    return sorted(edges)


@dataclass(frozen=True)
class TransitionGraph:
    system: SwitchingSystem
    vertices: tuple[Face, ...]
    edges: tuple[tuple[Face, Face], ...]
    successors: dict[Face, tuple[Face, ...]] = field(repr=False)
    predecessors: dict[Face, tuple[Face, ...]] = field(repr=False)
    incidence: dict[Face, tuple[tuple[Cell, Role], ...]] = field(repr=False)
    cell_types: dict[Cell, CellType] = field(repr=False)

    def image(self, vertices: Iterable[Face]) -> set[Face]:
        out: set[Face] = set()
        for v in vertices:
            out.update(self.successors[v])
        return out

    def preimage(self, vertices: Iterable[Face]) -> set[Face]:
        out: set[Face] = set()
        for v in vertices:
            out.update(self.predecessors[v])
        return out

    def reachable(self, start: Iterable[Face]) -> set[Face]:
        """Every vertex reachable from ``start`` by a path of length >= 0."""
        seen = set(start)
        stack = list(seen)
        while stack:
            for w in self.successors[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def role(self, cell: Cell, face: Face) -> Role:
        for c, r in self.incidence[face]:
            if c == cell:
                return r
        raise InvalidIncidence(f"{face} is not a face of cell {cell}")

    def is_interior(self, face: Face) -> bool:
        return face.is_wall and len(self.incidence[face]) == 2


def build_stg(sys: SwitchingSystem) -> TransitionGraph:
    cell_types = {c: classify_cell(sys, c) for c in sys.cells()}
    incidence: dict[Face, list[tuple[Cell, Role]]] = {}
    edges: set[tuple[Face, Face]] = set()
    for cell in sys.cells():
        for f in faces_of(sys, cell):
            incidence.setdefault(f, []).append((cell, face_role(sys, cell, f)))
        edges.update(cell_graph(sys, cell))
    vertices = tuple(sorted(incidence))
    succ: dict[Face, list[Face]] = {v: [] for v in vertices}
    pred: dict[Face, list[Face]] = {v: [] for v in vertices}
    for u, v in sorted(edges):
        succ[u].append(v)
        pred[v].append(u)
    return TransitionGraph(
        system=sys,
        vertices=vertices,
        edges=tuple(sorted(edges)),
        successors={v: tuple(s) for v, s in succ.items()},
        predecessors={v: tuple(p) for v, p in pred.items()},
        incidence={v: tuple(sorted(incidence[v])) for v in vertices},
        cell_types=cell_types,
    )


def vertex_color(stg: TransitionGraph, v: Face) -> VertexColor:
    if v.is_point:
        return VertexColor.MINIMAL
    roles = [r for _, r in stg.incidence[v]]
    absorbing = roles.count(Role.ABSORBING)
    if len(roles) == 1:
        # outer walls are always entrances: pure sources
        return VertexColor.WHITE if absorbing == 0 else VertexColor.BLACK
    if absorbing == 1:
        return VertexColor.TRANSPARENT
    return VertexColor.BLACK if absorbing == 2 else VertexColor.WHITE


def _black_witness(stg: TransitionGraph, v: Face) -> str:
    sys = stg.system
    low, high = v.cells()
    a = v.axis
    t = sys.grid.threshold(a, v.index)
    name = ("xi", "eta")[a]
    return (
        f"Lambda_{a + 1}{low} = {sys.lam(low)[a]} > gamma_{a + 1}*{name}_{v.index} = {sys.gamma[a] * t}"
        f" > Lambda_{a + 1}{high} = {sys.lam(high)[a]}"
    )


def assert_no_black(stg: TransitionGraph) -> None:
    """Raise :class:`BlackVertexPresent` for the first wall that absorbs flow from both sides."""
    for v in stg.vertices:
        if v.is_wall and vertex_color(stg, v) is VertexColor.BLACK:
            raise BlackVertexPresent(v, _black_witness(stg, v))


def black_inequality(stg: TransitionGraph, v: Face) -> tuple[Fraction, Fraction, Fraction]:
    """The triple ``(Lambda low side, gamma * threshold, Lambda high side)`` behind a black wall."""
    sys = stg.system
    low, high = v.cells()
    a = v.axis
    return sys.lam(low)[a], sys.gamma[a] * sys.grid.threshold(a, v.index), sys.lam(high)[a]
