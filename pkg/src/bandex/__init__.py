"""Telephone-band to AM-band speech bandwidth extension."""

__version__ = "0.1.0"
