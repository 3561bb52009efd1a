"""Numerical stationarity tests for time functionals in projective Hilbert
space, classical phase space and configuration space."""

__version__ = "0.1.0"
