"""Desk-scale lab for next-patch-prediction training of token-grid models."""

__version__ = "0.1.0"
