"""Graphical mean curvature flow with transport under Neumann boundary conditions."""

__version__ = "0.1.0"
