"""Learned surrogates for multistage stochastic transmission expansion planning."""

__version__ = "0.1.0"
