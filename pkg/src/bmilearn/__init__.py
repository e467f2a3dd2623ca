"""Simulated BMI cursor-control experiments and learning-rule inference."""

__version__ = "0.1.0"
