"""Barrier-smoothed dual decomposition for separable convex programs."""

__version__ = "0.1.0"
