"""Pseudospectral simulator for coupled Cahn-Hilliard / Cahn-Hilliard-Oono polymer blends."""

__version__ = "0.1.0"
