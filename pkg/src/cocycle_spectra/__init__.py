"""Numerical toolkit for Lyapunov spectra of linear cocycles."""

__version__ = "0.1.0"
