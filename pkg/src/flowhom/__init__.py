"""Finite-dimensional Morse-Bott homology engine for quasi-gradient flows.

The package computes stationary manifolds of tamed vector fields on
level-set manifolds with boundary, builds trajectory moduli spaces, and
assembles F2 chain complexes (with boundary-obstructed corrections),
continuation maps, and Pin(2)-equivariant module structures.  Everything
is cross-checked against independent brute-force oracles (grid Conley
index, cellular and Borel homology).
"""

from flowhom.config import Tolerances, tol_profile

__all__ = ["Tolerances", "tol_profile"]

__version__ = "0.1.0"
