"""Spectral toolkit for cubic dispersive equations with randomized data."""

__version__ = "0.1.0"
