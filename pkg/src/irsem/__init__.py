"""Structural equation modelling for information retrieval data."""

__version__ = "0.1.0"
