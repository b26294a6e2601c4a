"""Stability-constrained RL with magnitude-and-direction policies."""

__version__ = "0.1.0"
