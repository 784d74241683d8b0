"""Genetic-programming implied-volatility models with dynamic training-subset selection."""

__version__ = "0.1.0"
