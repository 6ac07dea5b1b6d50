"""Mesh-free first-passage-time solvers for SDEs on point-cloud surfaces."""

__version__ = "0.1.0"
