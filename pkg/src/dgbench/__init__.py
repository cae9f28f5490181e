"""Numerical workbench for the geometric De Giorgi regularity argument."""

__version__ = "0.1.0"
