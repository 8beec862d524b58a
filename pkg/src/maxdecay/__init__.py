"""Numerical experiments on Schrodinger maximal estimates, fractal energies and projections."""

__version__ = "0.1.0"
