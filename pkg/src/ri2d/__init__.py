"""Simulation laboratory for two-dimensional random interlacements."""

__version__ = "0.1.0"
