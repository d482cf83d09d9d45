"""Numerical toolkit for singular Hopf bifurcation in slow-fast systems."""

__version__ = "0.1.0"
