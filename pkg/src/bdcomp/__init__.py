"""Numerical tools for a two-species competition system with advection and
Beddington-DeAngelis kinetics."""

__version__ = "0.1.0"
