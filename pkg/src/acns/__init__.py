"""Stochastic Allen-Cahn / Navier-Stokes simulation, nudging and long-time statistics."""

__version__ = "0.1.0"
