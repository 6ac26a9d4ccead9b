"""Seeded random switching systems that satisfy every validation rule."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .errors import SystemValidationError
from .stg import VertexColor, build_stg, vertex_color
from .switching import SwitchingSystem, validate_system

__all__ = ["random_spec", "random_system"]


def _fmt(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def random_spec(rng: np.random.Generator, max_i: int = 3, max_j: int = 3,
                gammas=(Fraction(1), Fraction(2), Fraction(1, 2))) -> dict:
    """A raw system description with integer thresholds and half-integer focal points.

    Tags are drawn first; each production component then depends only on the
    thresholds allowed to switch it, which makes the tag constraints hold by
    construction.  Focal points at half-integers can never sit on a threshold.
    """
    n_i = int(rng.integers(1, max_i + 1))
    n_j = int(rng.integers(1, max_j + 1))
    xi = np.cumsum(rng.integers(1, 4, n_i))
    eta = np.cumsum(rng.integers(1, 4, n_j))
    xi_tags = rng.integers(1, 3, n_i)
    eta_tags = rng.integers(1, 3, n_j)
    gamma = [gammas[int(k)] for k in rng.integers(0, len(gammas), 2)]

    def levels(tags, wanted):
        # index of the switching class of each cell along one axis
        out, k = [0], 0
        for t in tags:
            k += int(t == wanted)
            out.append(k)
        return out

    tops = (int(xi[-1]), int(eta[-1]))
    tables = []
    for comp in (0, 1):
        a = levels(xi_tags, comp + 1)
        b = levels(eta_tags, comp + 1)
        values = {}
        for key in sorted({(p, q) for p in a for q in b}):
            half = Fraction(int(rng.integers(0, tops[comp] + 2)) * 2 + 1, 2)
            values[key] = half * gamma[comp]
        tables.append((a, b, values))
    lam = {}
    for i in range(n_i + 1):
        for j in range(n_j + 1):
            pair = [t[2][(t[0][i], t[1][j])] for t in tables]
            lam[f"{i},{j}"] = [_fmt(pair[0]), _fmt(pair[1])]
    return {
        "gamma": [_fmt(g) for g in gamma],
        "xi": [{"value": str(int(v)), "tag": int(t)} for v, t in zip(xi, xi_tags)],
        "eta": [{"value": str(int(v)), "tag": int(t)} for v, t in zip(eta, eta_tags)],
        "lambda": lam,
    }


def random_system(rng: np.random.Generator, max_i: int = 3, max_j: int = 3, allow_black: bool = False,
                  attempts: int = 1000) -> tuple[SwitchingSystem, dict]:
    """Draw specs until one validates (and has no black wall unless allowed)."""
    for _ in range(attempts):
        spec = random_spec(rng, max_i, max_j)
        try:
            sys = validate_system(spec)
        except SystemValidationError:
            continue
        if not allow_black:
            stg = build_stg(sys)
            if any(v.is_wall and vertex_color(stg, v) is VertexColor.BLACK for v in stg.vertices):
                continue
        return sys, spec
    raise RuntimeError("no valid system found; loosen the constraints")
