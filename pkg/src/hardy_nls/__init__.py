"""Focusing energy-critical NLS with an inverse-square potential: a numerical laboratory."""

__version__ = "0.1.0"
