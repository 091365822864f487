"""Streaming F_p estimation for p > 2."""

__version__ = "0.1.0"
