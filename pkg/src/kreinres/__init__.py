"""Resonances of Krein strings and Pareto-optimal strings of minimal decay."""

__version__ = "0.1.0"
