"""Seawater intrusion: stationary profiles, finite-volume scheme and decay diagnostics."""

__version__ = "1.0.0"
