"""Simulation, estimation and certification of pulsed QND spin measurements."""

__version__ = "0.1.0"
