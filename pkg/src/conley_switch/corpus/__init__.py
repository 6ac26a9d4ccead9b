"""Bundled system files.

Top-level files are valid systems without black walls; ``invalid/`` holds
files that must be rejected and ``known_gaps/`` systems whose regions are
known to miss strict transversality on some edge.
"""

from __future__ import annotations

from pathlib import Path

from ..files import SystemFile, load_system

__all__ = ["CORPUS_DIR", "names", "corpus_path", "load"]

CORPUS_DIR = Path(__file__).resolve().parent


def names(group: str = "") -> list[str]:
    """Sorted names in one group: ``""`` (the valid corpus), ``"invalid"`` or ``"known_gaps"``."""
    folder = CORPUS_DIR / group
    prefix = f"{group}/" if group else ""
    return sorted(prefix + p.stem for p in folder.glob("*.json"))


def corpus_path(name: str) -> Path | None:
    p = CORPUS_DIR / (name if name.endswith(".json") else name + ".json")
    return p if p.is_file() else None


def load(name: str) -> SystemFile:
    p = corpus_path(name)
    if p is None:
        raise FileNotFoundError(f"no corpus system named {name!r}")
    return load_system(p)
