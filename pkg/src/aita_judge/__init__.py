"""Moral-judgement valence learning and analytics over Reddit comment dumps."""

__version__ = "0.1.0"
