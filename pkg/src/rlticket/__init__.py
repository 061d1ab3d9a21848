"""Lottery-ticket laboratory for small discrete-control RL agents."""

__version__ = "0.1.0"
