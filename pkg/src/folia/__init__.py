"""Verification engine for complex two-dimensional foliations on Kähler surfaces."""

__version__ = "0.1.0"
