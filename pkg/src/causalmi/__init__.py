"""Causal discovery and effect estimation for membership-inference traces."""

__version__ = "0.1.0"
