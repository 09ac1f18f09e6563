"""Robust quasi-static pivoting trajectories against a wall-floor corner."""

__version__ = "0.1.0"
