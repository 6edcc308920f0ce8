"""Deterministic takeover-control simulation with a two-phase haptic
steering interface and a fade-out comparison condition."""

__version__ = "0.1.0"
