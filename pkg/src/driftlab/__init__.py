"""Desk-scale laboratory for language drift in a pivot translation game."""

__version__ = "0.1.0"
