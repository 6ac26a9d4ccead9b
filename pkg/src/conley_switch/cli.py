"""Command line entry point: ``conley-switch validate|analyze|regions|verify|render``.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input,
3 the system has a black wall.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .corpus import corpus_path
from .errors import (
    BlackVertexPresent,
    ConleySwitchError,
    DeltaTooLarge,
    LatticePropertyViolation,
    NoFiniteThreshold,
    ParseError,
    SystemValidationError,
)
from .field import configure_threads
from .files import SCHEMA, SystemFile, format_rational, load_system, to_json
from .pipeline import (
    Analysis,
    VerifySettings,
    analysis_report,
    analyze,
    build_region_lattice,
    regions_report,
    verification_report,
    verify_regions,
)
from .render import lattice_dot, morse_dot, regions_svg
from .stg import assert_no_black
from .switching import to_fraction

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_BLACK = 0, 1, 2, 3


def _load(path: str) -> SystemFile:
    p = Path(path)
    if not p.exists():
        # bare names refer to the bundled corpus
        bundled = corpus_path(path)
        if bundled is not None:
            p = bundled
    return load_system(p)


def _write(path: str | None, text: str) -> None:
    if path is None:
        return
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _delta(args, sf: SystemFile):
    if getattr(args, "delta", None) is not None:
        return to_fraction(args.delta)
    return sf.delta


def _print_constants(a: Analysis) -> None:
    c = a.constants
    print(f"cells: {a.system.I + 1} x {a.system.J + 1}")
    print(f"mu = {c.mu:.6g}")
    if c.delta_star is None:
        print("lambda, rho, delta*: undefined (no finite threshold)")
    else:
        print(f"lambda = {c.lam:.6g}")
        print(f"rho = {c.rho:.6g}")
    print(f"gamma_bar = {c.gamma_bar:.6g}")
    if c.delta_star is not None:
        print(f"delta* = {c.delta_star:.6f}")


def cmd_validate(args) -> int:
    sf = _load(args.path)
    a = analyze(sf.system)
    _print_constants(a)
    assert_no_black(a.stg)
    print("valid")
    return EXIT_OK


def cmd_analyze(args) -> int:
    sf = _load(args.path)
    a = analyze(sf.system)
    report = analysis_report(a, sf.name)
    _write(args.dot, morse_dot(report))
    _write(args.lattice_dot, lattice_dot(report))
    _write(args.json, to_json(report))
    mg = a.morse
    print(f"Morse graph: {len(mg.morse_sets)} nodes, {len(mg.edges)} edges")
    for p, m in enumerate(mg.morse_sets):
        print(f"  M{p}: {' '.join(v.label for v in sorted(m))}")
    print(f"attractor lattice: {len(a.attractors.lattice)} elements")
    if report["black_walls"]:
        print(f"black walls: {' '.join(report['black_walls'])}")
    return EXIT_OK


def cmd_regions(args) -> int:
    sf = _load(args.path)
    a = analyze(sf.system)
    rl = build_region_lattice(a, _delta(args, sf), args.allow_unsafe_delta)
    report = regions_report(a, rl)
    _write(args.svg, regions_svg(report))
    _write(args.json, to_json(report))
    print(f"delta = {report['delta']}")
    for r in report["regions"]:
        counts = ", ".join(f"{n} {k}" for k, n in r["counts"].items() if n)
        print(f"  region {r['element']}: {counts or 'empty'}")
    return EXIT_OK


def _settings(args, sf: SystemFile) -> VerifySettings:
    base = VerifySettings()
    cfg = sf.integrator

    def pick(flag, key, default, cast):
        value = getattr(args, flag)
        if value is not None:
            return cast(value)
        if key in cfg:
            return cast(cfg[key])
        return default

    seed = args.seed if args.seed is not None else (sf.seed if sf.seed is not None else base.seed)
    return VerifySettings(
        samples=pick("samples", "samples", base.samples, int),
        trajectories=pick("trajectories", "trajectories", base.trajectories, int),
        dt=pick("dt", "dt", base.dt, float),
        horizon=pick("horizon", "horizon", base.horizon, float),
        seed=int(seed),
    )


def cmd_verify(args) -> int:
    sf = _load(args.path)
    a = analyze(sf.system)
    rl = build_region_lattice(a, _delta(args, sf), args.allow_unsafe_delta)
    settings = _settings(args, sf)
    v = verify_regions(a, rl, settings)
    report = {
        "schema": SCHEMA,
        "kind": "report",
        "version": __version__,
        "analysis": analysis_report(a, sf.name),
        "regions": regions_report(a, rl),
        "verification": verification_report(a, v),
    }
    _write(args.json, to_json(report))
    print(f"delta = {format_rational(v.delta)}, seed = {settings.seed}")
    for r in v.regions:
        tr = r.transversality
        worst = tr.worst
        inv = r.invariance
        margin = "n/a" if worst is None else f"{worst.margin:.4g}"
        chips = f"{sum(c.certified for c in r.chips)}/{len(r.chips)}"
        print(f"  region {r.index}: {'PASS' if r.passed else 'FAIL'}  worst margin {margin}, "
              f"chips certified {chips}, escapes {inv.escapes}/{inv.n_traj}")
    loc = v.localization
    print(f"  localization: {loc.violations} violations over {loc.n_traj} trajectories")
    if v.passed:
        print("PASS")
        return EXIT_OK
    print(f"FAIL: {v.first_failure}")
    return EXIT_FAIL


def cmd_render(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"{args.report}: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(report, dict) or report.get("schema") != SCHEMA:
        raise ParseError(f"{args.report}: not a {SCHEMA} report")
    kind = report.get("kind")
    analysis = report.get("analysis") if kind == "report" else report if kind == "analysis" else None
    regions = report.get("regions") if kind == "report" else report if kind == "regions" else None
    wrote = False
    if args.dot:
        if analysis is None:
            raise ParseError(f"{args.report}: no analysis section to draw a Morse graph from")
        _write(args.dot, morse_dot(analysis))
        wrote = True
    if args.lattice_dot:
        if analysis is None:
            raise ParseError(f"{args.report}: no analysis section to draw a lattice from")
        _write(args.lattice_dot, lattice_dot(analysis))
        wrote = True
    if args.svg:
        if regions is None:
            raise ParseError(f"{args.report}: no regions section to draw")
        _write(args.svg, regions_svg(regions))
        wrote = True
    if not wrote:
        print("nothing to render; pass --dot, --lattice-dot or --svg", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conley-switch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a system file and print its constants")
    p.add_argument("path")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="transition graph, Morse graph and attractor lattice")
    p.add_argument("path")
    p.add_argument("--dot", help="write the Morse graph in DOT format")
    p.add_argument("--lattice-dot", help="write the attractor lattice in DOT format")
    p.add_argument("--json", help="write the analysis report")
    p.set_defaults(func=cmd_analyze)

    def delta_args(p):
        p.add_argument("--delta", help="collar width as a decimal or p/q (default 0.9 delta*)")
        p.add_argument("--allow-unsafe-delta", action="store_true",
                       help="accept delta >= delta* (delta < lambda is still required)")

    p = sub.add_parser("regions", help="build the trapping region of every attractor")
    p.add_argument("path")
    delta_args(p)
    p.add_argument("--svg", help="write the regions as SVG")
    p.add_argument("--json", help="write the region inventories")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("verify", help="numerically certify every region")
    p.add_argument("path")
    delta_args(p)
    p.add_argument("--samples", type=int, help="sample points per boundary edge (default 100)")
    p.add_argument("--trajectories", type=int, help="trajectories per region (default 1000)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--dt", type=float, help="RK4 step (default 1e-3)")
    p.add_argument("--horizon", type=float, help="integration time (default 50)")
    p.add_argument("--json", help="write the full report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("render", help="draw DOT or SVG from a saved JSON report")
    p.add_argument("report")
    p.add_argument("--dot")
    p.add_argument("--lattice-dot")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_threads()
    try:
        return args.func(args)
    except BlackVertexPresent as e:
        print(f"BlackVertexPresent: {e}", file=sys.stderr)
        return EXIT_BLACK
    except SystemValidationError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INPUT
    except (ParseError, DeltaTooLarge, NoFiniteThreshold, OSError) as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except LatticePropertyViolation as e:
        print(f"LatticePropertyViolation: {e}", file=sys.stderr)
        return EXIT_FAIL
    except ConleySwitchError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
