"""Controllable real-time character motion synthesis toolkit."""

__version__ = "0.1.0"
