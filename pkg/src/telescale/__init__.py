"""Simulation and verification toolkit for superposed heavy-tailed M/G/infinity traffic."""

__version__ = "0.1.0"
