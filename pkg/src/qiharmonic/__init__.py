"""Numerical laboratory for harmonic maps within bounded distance of
quasiisometries between real hyperbolic spaces."""

__version__ = "0.1.0"
