"""Spectral engine for the critical nonlinear Schrodinger equation of the twisted Laplacian."""

__version__ = "0.1.0"
