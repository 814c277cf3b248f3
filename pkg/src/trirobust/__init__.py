"""Trilevel stochastic-robust optimization with decision-dependent uncertainty."""

__version__ = "0.1.0"
