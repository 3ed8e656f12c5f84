"""Simulator and batch harness for trap-based verifiable blind quantum computation."""

__version__ = "0.1.0"
