"""Continuous surveillance for published systematic literature reviews."""

__version__ = "0.1.0"
