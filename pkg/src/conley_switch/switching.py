"""Two-dimensional switching systems: model, validation, cell types and constants.

A switching system is the ODE ``x' = -Gamma x + Lambda(x)`` on the positive
quadrant, where ``Lambda`` is constant on each open rectangle (cell) cut out by
the thresholds ``xi`` on the first axis and ``eta`` on the second.  Every
validation step uses exact :class:`fractions.Fraction` arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterator, Mapping

from .errors import InternalClassificationGap, NoFiniteThreshold, SystemValidationError, Violation

__all__ = [
    "MAX_THRESHOLDS",
    "CellType",
    "ThresholdGrid",
    "SwitchingSystem",
    "SystemConstants",
    "to_fraction",
    "validate_system",
    "focal_point",
    "classify_cell",
    "derived_constants",
    "single_cell_constants",
]

MAX_THRESHOLDS = 32

Cell = tuple[int, int]


class CellType(str, enum.Enum):
    N = "N"
    NE = "NE"
    E = "E"
    SE = "SE"
    S = "S"
    SW = "SW"
    W = "W"
    NW = "NW"
    A = "A"

    @classmethod
    def from_offsets(cls, dx: int, dy: int) -> "CellType":
        """Label for a focal point lying ``dx``/``dy`` cells away (each in -1, 0, 1)."""
        return _OFFSET_TO_TYPE[(dx, dy)]

    @property
    def offsets(self) -> tuple[int, int]:
        return _TYPE_TO_OFFSET[self]


_OFFSET_TO_TYPE = {
    (0, 1): CellType.N,
    (1, 1): CellType.NE,
    (1, 0): CellType.E,
    (1, -1): CellType.SE,
    (0, -1): CellType.S,
    (-1, -1): CellType.SW,
    (-1, 0): CellType.W,
    (-1, 1): CellType.NW,
    (0, 0): CellType.A,
}
_TYPE_TO_OFFSET = {v: k for k, v in _OFFSET_TO_TYPE.items()}


def to_fraction(value) -> Fraction:
    """Exact rational from a decimal string, int, Fraction or float (via its repr)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational number")


@dataclass(frozen=True)
class ThresholdGrid:
    """Finite thresholds per axis with their partition tags (1 or 2).

    The implicit outer bounds 0 and +inf are not stored.
    """

    xi: tuple[Fraction, ...]
    xi_tags: tuple[int, ...]
    eta: tuple[Fraction, ...]
    eta_tags: tuple[int, ...]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.xi), len(self.eta)

    def axis(self, a: int) -> tuple[Fraction, ...]:
        return self.xi if a == 0 else self.eta

    def tags(self, a: int) -> tuple[int, ...]:
        return self.xi_tags if a == 0 else self.eta_tags

    def threshold(self, a: int, k: int) -> Fraction | None:
        """Threshold number ``k`` on axis ``a``: 0 for k=0, None (infinity) past the last."""
        values = self.axis(a)
        if k == 0:
            return Fraction(0)
        if k <= len(values):
            return values[k - 1]
        return None

    def tag(self, a: int, k: int) -> int:
        """Partition tag of the finite threshold number ``k`` (1-based)."""
        return self.tags(a)[k - 1]


@dataclass(frozen=True)
class SwitchingSystem:
    gamma: tuple[Fraction, Fraction]
    grid: ThresholdGrid
    lambda_table: Mapping[Cell, tuple[Fraction, Fraction]]
    bbox: tuple[Fraction, Fraction]

    @property
    def I(self) -> int:  # noqa: E743
        return len(self.grid.xi)

    @property
    def J(self) -> int:
        return len(self.grid.eta)

    def cells(self) -> Iterator[Cell]:
        """All cells in lexicographic order."""
        return iter(product(range(self.I + 1), range(self.J + 1)))

    def has_cell(self, cell: Cell) -> bool:
        i, j = cell
        return 0 <= i <= self.I and 0 <= j <= self.J

    def extent(self, cell: Cell, axis: int) -> tuple[Fraction, Fraction | None]:
        """Open interval of ``cell`` along ``axis``; the upper end is None when unbounded."""
        k = cell[axis]
        return self.grid.threshold(axis, k), self.grid.threshold(axis, k + 1)

    def truncated_extent(self, cell: Cell, axis: int) -> tuple[Fraction, Fraction]:
        lo, hi = self.extent(cell, axis)
        return lo, self.bbox[axis] if hi is None else hi

    def lam(self, cell: Cell) -> tuple[Fraction, Fraction]:
        return self.lambda_table[cell]

    def focal(self, cell: Cell) -> tuple[Fraction, Fraction]:
        l1, l2 = self.lambda_table[cell]
        return l1 / self.gamma[0], l2 / self.gamma[1]


@dataclass(frozen=True)
class SystemConstants:
    """Collar-width constants; ``delta_star`` is None when no finite threshold exists."""

    mu: float
    lam: float | None
    rho: float | None
    gamma_bar: float
    delta_star: float | None


def _parse_thresholds(raw, axis_name: str, violations: list[Violation]):
    values: list[Fraction] = []
    tags: list[int] = []
    for k, entry in enumerate(raw or []):
        if isinstance(entry, Mapping):
            value, tag = entry.get("value"), entry.get("tag")
        else:
            value, tag = entry
        try:
            values.append(to_fraction(value))
        except (TypeError, ValueError, ZeroDivisionError):
            violations.append(Violation("ParseError", f"{axis_name}[{k}] value {value!r} is not rational",
                                        {"axis": axis_name, "index": k}))
            continue
        if tag not in (1, 2):
            violations.append(Violation("InvalidTag", f"{axis_name}[{k}] has tag {tag!r}; expected 1 or 2",
                                        {"axis": axis_name, "index": k}))
            tag = 1
        tags.append(int(tag))
    if len(values) > MAX_THRESHOLDS:
        violations.append(Violation("GridTooLarge", f"{axis_name} has {len(values)} thresholds; at most "
                                    f"{MAX_THRESHOLDS} are supported", {"axis": axis_name}))
    previous = Fraction(0)
    for k, v in enumerate(values):
        if v <= previous:
            violations.append(Violation(
                "NonMonotoneThresholds",
                f"{axis_name}[{k}] = {v} does not exceed the previous bound {previous}",
                {"axis": axis_name, "index": k},
            ))
        previous = max(previous, v)
    return tuple(values), tuple(tags)


def _parse_cell_key(key) -> Cell:
    if isinstance(key, str):
        a, b = key.split(",")
        return int(a), int(b)
    i, j = key
    return int(i), int(j)


def validate_system(spec: Mapping) -> SwitchingSystem:
    """Build a :class:`SwitchingSystem` from a raw description or raise with every violation.

    ``spec`` has keys ``gamma`` (pair), ``xi`` and ``eta`` (lists of
    ``{"value", "tag"}`` mappings or ``(value, tag)`` pairs), ``lambda`` (or
    ``lambda_table``) mapping ``"i,j"`` or ``(i, j)`` to a pair, and an
    optional ``bbox`` pair.
    """
    violations: list[Violation] = []

    try:
        gamma = tuple(to_fraction(g) for g in spec["gamma"])
        if len(gamma) != 2:
            raise ValueError
    except (KeyError, TypeError, ValueError, ZeroDivisionError):
        raise SystemValidationError([Violation("ParseError", "gamma must be a pair of rationals")])
    if any(g <= 0 for g in gamma):
        violations.append(Violation("NonPositiveRate", f"decay rates {gamma} must be positive", {"gamma": True}))

    xi, xi_tags = _parse_thresholds(spec.get("xi"), "xi", violations)
    eta, eta_tags = _parse_thresholds(spec.get("eta"), "eta", violations)
    grid = ThresholdGrid(xi, xi_tags, eta, eta_tags)
    I, J = len(xi), len(eta)

    raw_table = spec.get("lambda", spec.get("lambda_table"))
    if raw_table is None:
        violations.append(Violation("IncompleteLambdaTable", "no production table given"))
        raw_table = {}
    table: dict[Cell, tuple[Fraction, Fraction]] = {}
    for key, value in raw_table.items():
        try:
            cell = _parse_cell_key(key)
            pair = tuple(to_fraction(v) for v in value)
            if len(pair) != 2:
                raise ValueError
        except (TypeError, ValueError, ZeroDivisionError):
            violations.append(Violation("ParseError", f"bad production entry {key!r}: {value!r}"))
            continue
        table[cell] = pair
    expected = set(product(range(I + 1), range(J + 1)))
    missing = sorted(expected - table.keys())
    extra = sorted(table.keys() - expected)
    if missing or extra:
        violations.append(Violation(
            "IncompleteLambdaTable",
            f"production table must cover exactly the cells of the {I + 1}x{J + 1} grid"
            f" (missing {missing}, unexpected {extra})",
            {"missing": missing, "extra": extra},
        ))
    for cell, pair in sorted(table.items()):
        if any(v <= 0 for v in pair):
            violations.append(Violation("NonPositiveRate", f"production rates at {cell} must be positive",
                                        {"cell": cell}))
    if violations:
        raise SystemValidationError(violations)

    # Tag constraints: on either axis a tag-1 threshold keeps Lambda_2 fixed
    # across it and a tag-2 threshold keeps Lambda_1 fixed.
    for axis, values in ((0, xi), (1, eta)):
        for k in range(1, len(values) + 1):
            tag = grid.tag(axis, k)
            component = 1 if tag == 1 else 0
            for m in range((J if axis == 0 else I) + 1):
                lo = (k - 1, m) if axis == 0 else (m, k - 1)
                hi = (k, m) if axis == 0 else (m, k)
                if table[lo][component] != table[hi][component]:
                    name = "xi" if axis == 0 else "eta"
                    violations.append(Violation(
                        "TagConstraintViolated",
                        f"Lambda_{component + 1} differs across {name}_{k} = {values[k - 1]} (tag {tag})"
                        f" between cells {lo} and {hi}",
                        {"axis": name, "threshold": k, "cells": (lo, hi)},
                    ))

    seen: dict[tuple[Fraction, Fraction], Cell] = {}
    for cell in sorted(table):
        pair = table[cell]
        if pair in seen:
            violations.append(Violation("DuplicateLambda", f"cells {seen[pair]} and {cell} share Lambda {pair}",
                                        {"cells": (seen[pair], cell)}))
        else:
            seen[pair] = cell

    for cell in sorted(table):
        for axis, values in ((0, xi), (1, eta)):
            phi = table[cell][axis] / gamma[axis]
            if phi in values:
                violations.append(Violation(
                    "FocalOnThreshold",
                    f"focal point component {axis + 1} of cell {cell} equals the threshold {phi}",
                    {"cell": cell, "axis": axis},
                ))
    if violations:
        raise SystemValidationError(violations)

    bbox = _default_bbox(gamma, grid, table)
    if spec.get("bbox") is not None:
        try:
            bbox = tuple(to_fraction(b) for b in spec["bbox"])
        except (TypeError, ValueError, ZeroDivisionError):
            raise SystemValidationError([Violation("ParseError", "bbox must be a pair of rationals")])
        for axis, values in ((0, xi), (1, eta)):
            top = values[-1] if values else Fraction(0)
            if len(bbox) != 2 or bbox[axis] <= top:
                raise SystemValidationError([Violation(
                    "InvalidBoundingBox", f"bbox {bbox} must exceed every threshold", {"axis": axis})])

    return SwitchingSystem(gamma=gamma, grid=grid, lambda_table=dict(sorted(table.items())), bbox=bbox)


def _default_bbox(gamma, grid: ThresholdGrid, table) -> tuple[Fraction, Fraction]:
    # Twice the largest focal coordinate, and at least twice the largest
    # threshold so unbounded cells keep a tile of nonzero width.
    out = []
    for axis in (0, 1):
        top = max(v[axis] / gamma[axis] for v in table.values())
        values = grid.axis(axis)
        out.append(max(2 * top, 2 * values[-1]) if values else 2 * top)
    return out[0], out[1]


def focal_point(sys: SwitchingSystem, cell: Cell) -> tuple[Fraction, Fraction]:
    """Attracting equilibrium ``Gamma^-1 Lambda`` of the affine flow on ``cell``."""
    if not sys.has_cell(cell):
        raise IndexError(f"cell {cell} outside the {sys.I + 1}x{sys.J + 1} grid")
    return sys.focal(cell)


def _position(value: Fraction, lo: Fraction, hi: Fraction | None) -> int:
    if value < lo:
        return -1
    if hi is not None and value > hi:
        return 1
    if value == lo or value == hi:
        raise InternalClassificationGap(f"focal coordinate {value} sits on a threshold")
    return 0


def classify_cell(sys: SwitchingSystem, cell: Cell) -> CellType:
    phi = focal_point(sys, cell)
    dx = _position(phi[0], *sys.extent(cell, 0))
    dy = _position(phi[1], *sys.extent(cell, 1))
    return CellType.from_offsets(dx, dy)


def derived_constants(sys: SwitchingSystem) -> SystemConstants:
    """Focal gap, half minimal width, focal displacement, rate ratio and the collar bound.

    Raises :class:`NoFiniteThreshold` when neither axis has a threshold.
    """
    g1, g2 = sys.gamma
    gamma_bar = float(min(g1 / g2, g2 / g1))

    mu = None
    for cell in sys.cells():
        phi = sys.focal(cell)
        for axis in (0, 1):
            for t in (Fraction(0), *sys.grid.axis(axis)):
                gap = abs(phi[axis] - t)
                mu = gap if mu is None else min(mu, gap)

    widths = []
    for axis in (0, 1):
        values = (Fraction(0), *sys.grid.axis(axis))
        widths.extend(b - a for a, b in zip(values, values[1:]))
    if not widths:
        raise NoFiniteThreshold("the system has a single cell; no collar width is defined")
    lam = min(widths) / 2

    rho = Fraction(0)
    for cell in sys.cells():
        phi = sys.focal(cell)
        for axis in (0, 1):
            for bound in sys.extent(cell, axis):
                if bound is not None:
                    rho = max(rho, abs(phi[axis] - bound))

    lam_f, mu_f, rho_f = float(lam), float(mu), float(rho)
    first = lam_f * mu_f * gamma_bar / (math.sqrt(2.0) * (2.0 * lam_f + 3.0 * rho_f))
    second = math.sqrt(lam_f * mu_f * gamma_bar / 32.0)
    return SystemConstants(mu=mu_f, lam=lam_f, rho=rho_f, gamma_bar=gamma_bar, delta_star=min(first, second))


def single_cell_constants(sys: SwitchingSystem) -> SystemConstants:
    """Constants for a system without thresholds: only the focal gap and rate ratio exist."""
    g1, g2 = sys.gamma
    phi = sys.focal((0, 0))
    return SystemConstants(mu=float(min(phi)), lam=None, rho=None,
                           gamma_bar=float(min(g1 / g2, g2 / g1)), delta_star=None)
