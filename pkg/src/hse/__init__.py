"""Hyper space exploration: DoE plans, simulation campaigns, surrogates and trade-offs."""

__version__ = "0.1.0"
