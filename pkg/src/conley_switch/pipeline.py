"""End-to-end analysis of one system and the JSON reports describing it."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal
from fractions import Fraction

from . import __version__
from .errors import DeltaTooLarge, NoFiniteThreshold
from .field import make_fdelta
from .files import SCHEMA, format_rational, json_number, system_to_dict
from .geometry import Piece
from .order import AttractorLattice, MorseGraph, attractor_lattice, morse_graph
from .regions import Region, RegionLattice, build_tiles, region_lattice
from .stg import TransitionGraph, VertexColor, assert_no_black, build_stg, vertex_color
from .switching import SwitchingSystem, SystemConstants, derived_constants, single_cell_constants
from .verify import (
    ChipCertificate,
    InvarianceReport,
    LocalizationReport,
    TransversalityReport,
    check_forward_invariance,
    check_transversality,
    chip_quadratic,
    localize_morse_sets,
)

__all__ = [
    "Analysis",
    "VerifySettings",
    "RegionVerification",
    "Verification",
    "analyze",
    "default_delta",
    "checked_delta",
    "build_region_lattice",
    "verify_regions",
    "analysis_report",
    "regions_report",
    "verification_report",
]


@dataclass(frozen=True)
class Analysis:
    system: SwitchingSystem
    constants: SystemConstants
    stg: TransitionGraph
    morse: MorseGraph
    attractors: AttractorLattice

    @property
    def black_walls(self) -> list:
        return [v for v in self.stg.vertices if v.is_wall and vertex_color(self.stg, v) is VertexColor.BLACK]


def analyze(sys: SwitchingSystem) -> Analysis:
    try:
        constants = derived_constants(sys)
    except NoFiniteThreshold:
        constants = single_cell_constants(sys)
    stg = build_stg(sys)
    mg = morse_graph(stg)
    return Analysis(sys, constants, stg, mg, attractor_lattice(stg, mg))


def default_delta(constants: SystemConstants, fraction: float = 0.9) -> Fraction:
    """``fraction * delta*`` truncated to six significant digits, as an exact rational."""
    if constants.delta_star is None:
        raise NoFiniteThreshold("the system has no finite threshold, so no collar width applies")
    d = Decimal(repr(fraction * constants.delta_star))
    quantum = Decimal(1).scaleb(d.adjusted() - 5)
    return Fraction(d.quantize(quantum, rounding=ROUND_DOWN))


def checked_delta(analysis: Analysis, delta=None, allow_unsafe: bool = False) -> Fraction:
    """The collar width to use: the default when None; refuse ``delta >= delta*`` unless forced."""
    c = analysis.constants
    if c.delta_star is None:
        raise NoFiniteThreshold("the system has no finite threshold, so no collar width applies")
    d = default_delta(c) if delta is None else Fraction(delta)
    if d <= 0 or d >= Fraction(repr(c.lam)):
        raise DeltaTooLarge(f"delta = {format_rational(d)} must satisfy 0 < delta < lambda = {c.lam}")
    if d >= Fraction(repr(c.delta_star)) and not allow_unsafe:
        raise DeltaTooLarge(f"delta = {format_rational(d)} is not below delta* = {c.delta_star:.6g}; "
                            "pass --allow-unsafe-delta to use it anyway")
    return d


def build_region_lattice(analysis: Analysis, delta=None, allow_unsafe: bool = False,
                         check: bool = True) -> RegionLattice:
    d = checked_delta(analysis, delta, allow_unsafe)
    assert_no_black(analysis.stg)
    import warnings

    with warnings.catch_warnings():
        # the delta* warning is already handled by checked_delta
        warnings.simplefilter("ignore")
        tiles = build_tiles(analysis.system, d)
    return region_lattice(analysis.stg, tiles, analysis.attractors, check=check)


@dataclass(frozen=True)
class VerifySettings:
    samples: int = 100
    trajectories: int = 1000
    dt: float = 1e-3
    horizon: float = 50.0
    seed: int = 0
    t_grid: int = 101


@dataclass(frozen=True)
class RegionVerification:
    index: int
    transversality: TransversalityReport
    chips: tuple[ChipCertificate, ...]
    invariance: InvarianceReport | None

    @property
    def chips_certified(self) -> bool:
        return all(c.certified for c in self.chips)

    @property
    def passed(self) -> bool:
        inv = self.invariance is None or self.invariance.passed
        return self.transversality.passed and self.chips_certified and inv


@dataclass(frozen=True)
class Verification:
    delta: Fraction
    settings: VerifySettings
    regions: tuple[RegionVerification, ...]
    localization: LocalizationReport
    lattice: RegionLattice = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.first_failure is None

    @property
    def first_failure(self) -> str | None:
        for r in self.regions:
            if not r.transversality.passed:
                return f"transversality (region {r.index})"
            if not r.chips_certified:
                return f"chip quadratic (region {r.index})"
            if r.invariance is not None and not r.invariance.passed:
                return f"forward invariance (region {r.index})"
        if not self.localization.passed:
            return "Morse-set localization"
        return None


def verify_regions(analysis: Analysis, lattice: RegionLattice, settings: VerifySettings = VerifySettings()
                   ) -> Verification:
    """Run every check on every nonempty region, then the lattice-wide localization."""
    sys = analysis.system
    delta = lattice.regions[0].tiles.delta
    sampler = make_fdelta(sys, delta)
    out = []
    for k, region in enumerate(lattice.regions):
        if region.is_empty:
            continue
        tr = check_transversality(sampler, region, settings.samples)
        chips = tuple(chip_quadratic(sys, c, delta, settings.t_grid, strict=False)
                      for _, c in sorted(region.chips.items(), key=lambda kv: repr(kv[0])))
        inv = check_forward_invariance(sampler, region, settings.trajectories, settings.dt, settings.horizon,
                                       settings.seed)
        out.append(RegionVerification(k, tr, chips, inv))
    loc = localize_morse_sets(sampler, lattice, settings.trajectories, settings.dt, settings.horizon,
                              settings.seed)
    return Verification(delta, settings, tuple(out), loc, lattice)


# --- reports ----------------------------------------------------------------------


def _header(kind: str) -> dict:
    return {"schema": SCHEMA, "kind": kind, "version": __version__}


def _labels(vertices) -> list[str]:
    return [v.label for v in sorted(vertices)]


def _point(p) -> list[str]:
    return [format_rational(p[0]), format_rational(p[1])]


def _key_label(key) -> str:
    kind, what = key
    if kind == "G2":
        return f"G2({what[0]},{what[1]})"
    if kind == "G1":
        return f"G1({what.label})"
    if kind == "G0":
        return f"G0({what[0]},{what[1]})"
    cell, wall, point = what
    return f"{kind}({cell[0]},{cell[1]};{wall.label};{point[0]},{point[1]})"


def analysis_report(analysis: Analysis, name: str = "") -> dict:
    sys, c, stg = analysis.system, analysis.constants, analysis.stg
    mg, al = analysis.morse, analysis.attractors
    lat = al.lattice
    return {
        **_header("analysis"),
        "name": name,
        "system": system_to_dict(sys),
        "constants": {
            "mu": json_number(c.mu),
            "lambda": None if c.lam is None else json_number(c.lam),
            "rho": None if c.rho is None else json_number(c.rho),
            "gamma_bar": json_number(c.gamma_bar),
            "delta_star": None if c.delta_star is None else json_number(c.delta_star),
        },
        "cells": [
            {"cell": list(cell), "lambda": _point(sys.lam(cell)), "focal": _point(sys.focal(cell)),
             "type": stg.cell_types[cell].value}
            for cell in sys.cells()
        ],
        "vertices": [{"label": v.label, "color": vertex_color(stg, v).value} for v in stg.vertices],
        "edges": [[u.label, v.label] for u, v in stg.edges],
        "black_walls": [v.label for v in analysis.black_walls],
        "morse_graph": {
            "nodes": [{"id": p, "morse_set": _labels(m)} for p, m in enumerate(mg.morse_sets)],
            "edges": [list(e) for e in mg.edges],
        },
        "attractor_lattice": {
            "elements": [{"id": k, "vertices": _labels(a)} for k, a in enumerate(lat.elements)],
            "bottom": lat.bottom,
            "top": lat.top,
            "covers": [[a, b] for b in range(len(lat)) for a in lat.lower_covers(b)],
            "join_irreducible": [{"element": a, "morse_node": p, "predecessor": al.pred[a]}
                                 for a, p in sorted(al.join_irreducible.items())],
        },
    }


def _piece(piece: Piece) -> dict:
    return {"key": _key_label(piece.key), "kind": piece.key[0], "vertices": [_point(p) for p in piece.vertices]}


def _region(k: int, region: Region) -> dict:
    return {
        "element": k,
        "vertices": _labels(region.vertices),
        "counts": region.counts(),
        "pieces": [_piece(p) for p in region.pieces],
        "boundary": [[_point(e.start) for e in loop.edges] for loop in region.boundary],
    }


def regions_report(analysis: Analysis, lattice: RegionLattice) -> dict:
    sys = analysis.system
    delta = lattice.regions[0].tiles.delta
    return {
        **_header("regions"),
        "delta": format_rational(delta),
        "bbox": _point(sys.bbox),
        "thresholds": {"xi": [format_rational(v) for v in sys.grid.xi],
                       "eta": [format_rational(v) for v in sys.grid.eta]},
        "regions": [_region(k, r) for k, r in enumerate(lattice.regions)],
    }


def _chip(c: ChipCertificate) -> dict:
    return {
        "key": _key_label(c.key),
        "kind": c.kind,
        "cell_types": [t.value for t in c.cell_types],
        "hypotheses_met": c.hypotheses_met,
        "delta_bound": json_number(c.bound),
        "min_T": None if c.min_value is None else json_number(c.min_value),
        "certified": c.certified,
    }


def verification_report(analysis: Analysis, v: Verification) -> dict:
    s = v.settings
    regions = []
    for r in v.regions:
        tr = r.transversality
        worst = tr.worst
        inv = r.invariance
        regions.append({
            "element": r.index,
            "passed": r.passed,
            "transversality": {
                "edges": len(tr.edges),
                "interior_edges": sum(e.interior for e in tr.edges),
                "worst_margin": None if worst is None else json_number(worst.margin),
                "failures": [
                    {"start": _point(e.start), "end": _point(e.end), "cases": list(e.cases),
                     "margin": json_number(e.margin), "point": [json_number(x) for x in e.worst_point]}
                    for e in tr.failures
                ],
                "envelope_uncertified": sum(1 for e in tr.edges if e.interior and e.envelope_certified is False),
            },
            "chips": [_chip(c) for c in r.chips],
            "invariance": None if inv is None else {
                "trajectories": inv.n_traj,
                "escapes": inv.escapes,
                "near_misses": inv.near_misses,
                "domain_exits": inv.domain_exits,
                "worst_excess": json_number(inv.worst_excess),
                "first_escape": None if inv.first_escape is None else list(inv.first_escape),
            },
        })
    loc = v.localization
    return {
        **_header("verification"),
        "delta": format_rational(v.delta),
        "settings": {"samples": s.samples, "trajectories": s.trajectories, "dt": s.dt, "horizon": s.horizon,
                     "seed": s.seed, "t_grid": s.t_grid},
        "passed": v.passed,
        "first_failure": v.first_failure,
        "regions": regions,
        "localization": {
            "trajectories": loc.n_traj,
            "violations": loc.violations,
            "first_violation": None if loc.first_violation is None else list(loc.first_violation),
            "domain_exits": loc.domain_exits,
            "nodes": [{"morse_node": t.node, "element": t.attractor, "starts": t.starts,
                       "tails_in_difference": t.tails_in_difference,
                       "tails_in_predecessor": t.tails_in_predecessor} for t in loc.nodes],
            "outside_top": {"starts": loc.outside_top_starts, "tails_in_top": loc.outside_top_tails_in_top},
        },
    }
