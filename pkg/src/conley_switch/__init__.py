"""Combinatorial and continuous dynamics of two-dimensional switching systems."""

__version__ = "0.1.0"
