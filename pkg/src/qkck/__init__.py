"""Prolongation connection for compatible conformal-Killing 2-forms on
quaternionic-Kaehler manifolds, with finite-difference model geometries."""

__version__ = "0.1.0"
