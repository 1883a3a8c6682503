"""Deterministic off-policy policy optimisation with trajectory replay."""

__version__ = "0.1.0"
