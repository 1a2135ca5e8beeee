"""Finite-volume simulation and convex-analysis toolkit for two-species
cross-diffusion systems with pressure-mediated growth."""

__version__ = "0.1.0"
