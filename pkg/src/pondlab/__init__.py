"""Simulation laboratory for two-dimensional invasion percolation."""

__version__ = "0.1.0"
