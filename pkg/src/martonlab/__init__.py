"""Numerical tools for Marton's inner bound on two-receiver broadcast channels."""

__version__ = "0.1.0"
