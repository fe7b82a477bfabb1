"""Synthetic-data generation and rare-class experimentation toolkit."""

__version__ = "0.1.0"
