"""Discrete exterior calculus on tetrahedral 3-manifolds.

Harmonic cochains, Hodge decomposition, symplectic leaf extraction from
level sets of harmonic potentials, and flux-based gravity experiments on
shell and torus fixtures.
"""

from . import dec, exterior, foliation, gravity, hodge, mesh, solve

__all__ = ["exterior", "mesh", "dec", "solve", "hodge", "foliation", "gravity"]

__version__ = "0.1.0"
