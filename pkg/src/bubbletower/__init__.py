"""Numerical companion for ring-shaped multi-bubble solutions of the prescribed scalar curvature equation."""

__version__ = "0.1.0"
