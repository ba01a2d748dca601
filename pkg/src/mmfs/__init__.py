"""Flagellated microswimmer model: simulation, asymptotics and suspension rheology."""
__version__ = "0.1.0"
