"""Numerics for the Choquard problem on hyperbolic space."""

__version__ = "0.1.0"
