"""Numerical laboratory for Fisher-KPP invasion from indicator data."""
__version__ = "0.1.0"
