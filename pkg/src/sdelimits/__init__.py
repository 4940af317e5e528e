"""Weak-convergence experiments for one-dimensional SDEs whose drift oscillates faster as a parameter grows."""

__version__ = "0.1.0"
