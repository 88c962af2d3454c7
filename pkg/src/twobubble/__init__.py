"""Numerical laboratory for two-soliton NLS dynamics with logarithmic separation."""

__version__ = "0.1.0"
