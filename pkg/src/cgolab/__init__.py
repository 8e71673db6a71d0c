"""Numerical laboratory for increasing-stability recovery of Schrödinger
potentials from partial Cauchy data with complex geometrical optics solutions."""

from __future__ import annotations

__version__ = "0.1.0"
