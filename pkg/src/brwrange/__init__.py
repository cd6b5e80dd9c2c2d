"""Branching random walks on b-ary trees indexed by conditioned Galton-Watson trees."""
__version__ = "0.1.0"
