"""Friction observer toolkit: dynamic friction plant, reduced-order observer, PID design."""

__version__ = "0.1.0"
