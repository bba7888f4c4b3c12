"""Deterministic agent-based simulation of daily human mobility from POI and check-in data."""

__version__ = "0.1.0"
