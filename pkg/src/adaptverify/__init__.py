"""Verification-driven adaptation decisions over tagged goal models."""

__version__ = "0.1.0"
