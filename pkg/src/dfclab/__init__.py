"""Desk-scale building control lab: RC zone simulation, boosted trees, and three heating strategies."""
__version__ = "0.1.0"
