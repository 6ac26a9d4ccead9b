"""DOT and SVG renderings of analysis and region reports.

Both renderers read the report dictionaries, so a saved JSON report can be
rendered again later without recomputing anything.
"""

from __future__ import annotations

from fractions import Fraction
from xml.sax.saxutils import escape, quoteattr

from .switching import to_fraction

__all__ = ["morse_dot", "lattice_dot", "regions_svg", "SvgFrame"]

KIND_FILL = {"G2": "#9ecae1", "G1": "#fdae6b", "G0": "#fd8d3c", "Cn": "#a1d99b", "Cw": "#74c476"}


def _dot_id(text: str) -> str:
    # labels use DOT's own \n escapes, so only quotes need escaping
    return '"' + text.replace('"', '\\"') + '"'


def morse_dot(analysis: dict) -> str:
    """Morse graph: one node per Morse set labelled with its vertices, edges from the Hasse diagram."""
    mg = analysis["morse_graph"]
    lines = ["digraph morse {", "  node [shape=box, fontname=\"Helvetica\"];"]
    for node in mg["nodes"]:
        label = f"M{node['id']}\\n" + "\\n".join(_chunks(node["morse_set"], 4))
        lines.append(f"  m{node['id']} [label={_dot_id(label)}];")
    for p, q in mg["edges"]:
        lines.append(f"  m{p} -> m{q};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def lattice_dot(analysis: dict) -> str:
    """Hasse diagram of the attractor lattice, join-irreducibles drawn doubled."""
    lat = analysis["attractor_lattice"]
    irreducible = {e["element"]: e["morse_node"] for e in lat["join_irreducible"]}
    lines = ["digraph lattice {", "  rankdir=BT;", "  node [shape=ellipse, fontname=\"Helvetica\"];"]
    for e in lat["elements"]:
        k = e["id"]
        extra = f", peripheries=2, xlabel={_dot_id('M' + str(irreducible[k]))}" if k in irreducible else ""
        lines.append(f"  a{k} [label={_dot_id('A' + str(k) + ' (' + str(len(e['vertices'])) + ')')}{extra}];")
    for a, b in lat["covers"]:
        lines.append(f"  a{a} -> a{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _chunks(items: list[str], size: int) -> list[str]:
    return [" ".join(items[k:k + size]) for k in range(0, len(items), size)]


class SvgFrame:
    """Affine map from phase space to SVG user units (y flipped)."""

    def __init__(self, bbox: tuple[Fraction, Fraction], width: float = 600.0, margin: float = 20.0):
        self.bbox = bbox
        self.margin = margin
        self.scale = (width - 2 * margin) / float(max(bbox))
        self.height = 2 * margin + self.scale * float(bbox[1])
        self.width = 2 * margin + self.scale * float(bbox[0])

    def __call__(self, p) -> tuple[float, float]:
        x, y = float(p[0]), float(p[1])
        return self.margin + self.scale * x, self.height - self.margin - self.scale * y

    def inverse(self, u: float, v: float) -> tuple[float, float]:
        return (u - self.margin) / self.scale, (self.height - self.margin - v) / self.scale


def _num(v: float) -> str:
    return repr(round(v, 10))


def _points(frame: SvgFrame, vertices) -> str:
    out = []
    for p in vertices:
        u, v = frame(p)
        out.append(f"{_num(u)},{_num(v)}")
    return " ".join(out)


def regions_svg(regions: dict, elements: list[int] | None = None) -> str:
    """Grid lines, then one layer per lattice element with its tiles, chips and boundary loops."""
    bbox = tuple(to_fraction(b) for b in regions["bbox"])
    frame = SvgFrame(bbox)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(frame.width)}" height="{_num(frame.height)}" '
        f'viewBox="0 0 {_num(frame.width)} {_num(frame.height)}" '
        f'data-scale="{repr(frame.scale)}" data-margin="{repr(frame.margin)}">',
        f"  <title>{escape('regions, delta = ' + regions['delta'])}</title>",
        '  <g id="grid" stroke="#999" stroke-width="0.5" stroke-dasharray="4 3">',
    ]
    (x0, y0), (x1, y1) = frame((0, 0)), frame(bbox)
    lines.append(f'    <rect x="{_num(x0)}" y="{_num(y1)}" width="{_num(x1 - x0)}" height="{_num(y0 - y1)}" '
                 'fill="none" stroke-dasharray="none"/>')
    for x in regions["thresholds"]["xi"]:
        u, _ = frame((to_fraction(x), 0))
        lines.append(f'    <line x1="{_num(u)}" y1="{_num(y0)}" x2="{_num(u)}" y2="{_num(y1)}"/>')
    for y in regions["thresholds"]["eta"]:
        _, v = frame((0, to_fraction(y)))
        lines.append(f'    <line x1="{_num(x0)}" y1="{_num(v)}" x2="{_num(x1)}" y2="{_num(v)}"/>')
    lines.append("  </g>")
    for region in regions["regions"]:
        k = region["element"]
        if elements is not None and k not in elements:
            continue
        lines.append(f'  <g id="region-{k}" class="region" data-vertices={quoteattr(" ".join(region["vertices"]))}>')
        for piece in region["pieces"]:
            pts = [tuple(to_fraction(c) for c in p) for p in piece["vertices"]]
            lines.append(f'    <polygon class="{piece["kind"]}" data-key={quoteattr(piece["key"])} '
                         f'points="{_points(frame, pts)}" fill="{KIND_FILL[piece["kind"]]}" '
                         'fill-opacity="0.35" stroke="none"/>')
        for loop in region["boundary"]:
            pts = [tuple(to_fraction(c) for c in p) for p in loop]
            lines.append(f'    <polygon class="boundary" points="{_points(frame, pts)}" fill="none" '
                         'stroke="#08306b" stroke-width="1"/>')
        lines.append("  </g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
