"""Numerical toolkit for the compressible Navier-Stokes-Korteweg system with zero sound speed."""

__version__ = "0.1.0"
