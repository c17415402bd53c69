"""Spectral solver and verification tools for the super-Liouville system on the round sphere."""

__version__ = "0.1.0"
