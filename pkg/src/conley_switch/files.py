"""System files and deterministic JSON.

System files are JSON objects with a ``"schema": "conley-switch/1"`` header.
Every number is written as a string (``"0.5"`` or ``"1/3"``) and read back as
an exact rational, so nothing passes through binary floating point.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

from .errors import ParseError, SystemValidationError, Violation
from .switching import SwitchingSystem, to_fraction, validate_system

__all__ = [
    "SCHEMA",
    "SystemFile",
    "parse_system_text",
    "load_system",
    "system_to_dict",
    "dump_system",
    "format_rational",
    "to_json",
    "json_number",
]

SCHEMA = "conley-switch/1"

SYSTEM_KEYS = {"schema", "kind", "name", "description", "gamma", "xi", "eta", "lambda", "bbox",
               "delta", "seed", "integrator"}
INTEGRATOR_KEYS = {"dt", "horizon", "trajectories", "samples"}


@dataclass(frozen=True)
class SystemFile:
    """A parsed system plus the optional run settings stored beside it."""

    system: SwitchingSystem
    name: str = ""
    description: str = ""
    delta: Fraction | None = None
    seed: int | None = None
    integrator: dict = field(default_factory=dict)
    source: str = "<string>"


def _position(text: str, needle: str) -> tuple[int | None, int | None]:
    k = text.find(needle)
    if k < 0:
        return None, None
    line = text.count("\n", 0, k) + 1
    return line, k - (text.rfind("\n", 0, k) + 1) + 1


def _rational(value, what: str, text: str) -> Fraction:
    if not isinstance(value, str):
        line, col = _position(text, json.dumps(value)) if value is not None else (None, None)
        raise ParseError(f"{what} must be a decimal or p/q string, got {value!r}", line, col)
    try:
        return to_fraction(value)
    except (ValueError, ZeroDivisionError):
        line, col = _position(text, json.dumps(value))
        raise ParseError(f"{what} = {value!r} is not a rational number", line, col) from None


def parse_system_text(text: str, source: str = "<string>") -> SystemFile:
    """Parse a system file; raise :class:`ParseError` (with position) or
    :class:`SystemValidationError`."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{source}: {e.msg}", e.lineno, e.colno) from None
    if not isinstance(raw, dict):
        raise ParseError(f"{source}: top level must be an object", 1, 1)
    if raw.get("schema") != SCHEMA:
        line, col = _position(text, '"schema"')
        raise ParseError(f"{source}: expected \"schema\": \"{SCHEMA}\", got {raw.get('schema')!r}", line, col)
    if raw.get("kind", "system") != "system":
        line, col = _position(text, '"kind"')
        raise ParseError(f"{source}: expected a system file, got kind {raw.get('kind')!r}", line, col)
    for key in raw:
        if key not in SYSTEM_KEYS:
            line, col = _position(text, json.dumps(key))
            raise ParseError(f"{source}: unknown key {key!r}", line, col)
    integrator = raw.get("integrator") or {}
    if not isinstance(integrator, dict):
        raise ParseError(f"{source}: integrator must be an object", *_position(text, '"integrator"'))
    for key in integrator:
        if key not in INTEGRATOR_KEYS:
            line, col = _position(text, json.dumps(key))
            raise ParseError(f"{source}: unknown integrator key {key!r}", line, col)

    spec: dict[str, Any] = {}
    for key in ("gamma", "bbox"):
        if key in raw:
            if not isinstance(raw[key], list):
                raise ParseError(f"{source}: {key} must be a list", *_position(text, json.dumps(key)))
            spec[key] = [_rational(v, f"{key}[{k}]", text) for k, v in enumerate(raw[key])]
    for key in ("xi", "eta"):
        entries = raw.get(key, [])
        if not isinstance(entries, list):
            raise ParseError(f"{source}: {key} must be a list", *_position(text, json.dumps(key)))
        parsed = []
        for k, entry in enumerate(entries):
            if not isinstance(entry, dict) or set(entry) != {"value", "tag"}:
                raise ParseError(f"{source}: {key}[{k}] must be an object with exactly 'value' and 'tag'",
                                 *_position(text, json.dumps(key)))
            parsed.append({"value": _rational(entry["value"], f"{key}[{k}].value", text), "tag": entry["tag"]})
        spec[key] = parsed
    table = raw.get("lambda")
    if table is not None:
        if not isinstance(table, dict):
            raise ParseError(f"{source}: lambda must be an object keyed \"i,j\"", *_position(text, '"lambda"'))
        spec["lambda"] = {}
        for cell, pair in table.items():
            if not re.fullmatch(r"\d+,\d+", cell):
                raise ParseError(f"{source}: lambda key {cell!r} is not of the form \"i,j\"",
                                 *_position(text, json.dumps(cell)))
            if not isinstance(pair, list):
                raise ParseError(f"{source}: lambda[{cell}] must be a pair", *_position(text, json.dumps(cell)))
            spec["lambda"][cell] = [_rational(v, f"lambda[{cell}]", text) for v in pair]
    if "gamma" not in spec:
        raise SystemValidationError([Violation("ParseError", "gamma is required")])
    system = validate_system(spec)
    delta = _rational(raw["delta"], "delta", text) if raw.get("delta") is not None else None
    seed = raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool)):
        raise ParseError(f"{source}: seed must be an integer", *_position(text, '"seed"'))
    return SystemFile(system, str(raw.get("name", "")), str(raw.get("description", "")), delta, seed,
                      dict(integrator), source)


def load_system(path) -> SystemFile:
    path = Path(path)
    return parse_system_text(path.read_text(encoding="utf-8"), str(path))


def format_rational(q: Fraction) -> str:
    """Shortest exact string: a terminating decimal when there is one, else ``p/q``."""
    q = Fraction(q)
    if q.denominator == 1:
        return str(q.numerator)
    d = q.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d != 1:
        return f"{q.numerator}/{q.denominator}"
    places = max(twos, fives)
    scaled = abs(q.numerator) * 10 ** places // q.denominator
    digits = str(scaled).rjust(places + 1, "0")
    text = f"{digits[:-places]}.{digits[-places:]}".rstrip("0")
    return ("-" if q < 0 else "") + text


def system_to_dict(sys: SwitchingSystem, name: str = "", description: str = "", **settings) -> dict:
    out: dict[str, Any] = {"schema": SCHEMA, "kind": "system"}
    if name:
        out["name"] = name
    if description:
        out["description"] = description
    out["gamma"] = [format_rational(g) for g in sys.gamma]
    out["xi"] = [{"value": format_rational(v), "tag": t} for v, t in zip(sys.grid.xi, sys.grid.xi_tags)]
    out["eta"] = [{"value": format_rational(v), "tag": t} for v, t in zip(sys.grid.eta, sys.grid.eta_tags)]
    out["lambda"] = {f"{i},{j}": [format_rational(a), format_rational(b)]
                     for (i, j), (a, b) in sorted(sys.lambda_table.items())}
    out["bbox"] = [format_rational(b) for b in sys.bbox]
    if settings.get("delta") is not None:
        out["delta"] = format_rational(settings["delta"])
    if settings.get("seed") is not None:
        out["seed"] = int(settings["seed"])
    if settings.get("integrator"):
        out["integrator"] = dict(settings["integrator"])
    return out


def dump_system(sys: SwitchingSystem, **kwargs) -> str:
    return to_json(system_to_dict(sys, **kwargs))


def json_number(x: float) -> float | str:
    """Floats rounded to 12 significant digits; infinities and NaN become strings."""
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.12g}")


def to_json(obj: Mapping | list) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"
