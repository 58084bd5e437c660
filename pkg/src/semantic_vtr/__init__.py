"""Teach-and-repeat navigation with semantic object landmarks."""

__version__ = "0.1.0"
