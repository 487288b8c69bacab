"""Spectral reduced-order and finite-difference solvers for coupled heat and
moisture transfer through single- and multi-layer porous walls."""

__version__ = "0.1.0"
