"""Elastic functional data analysis with square-root slope functions."""

__version__ = "0.1.0"
