"""Radial reconfiguration and generator selection for multi-phase distribution networks."""

__version__ = "0.1.0"
