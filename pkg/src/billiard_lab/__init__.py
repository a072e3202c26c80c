"""Numerical laboratory for slowly mixing chaotic billiards."""

__version__ = "0.1.0"
