"""Numerical tools for strongly competing elliptic systems on the disk."""

__version__ = "0.1.0"
