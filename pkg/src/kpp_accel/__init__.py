"""Numerical study of accelerating fronts in the Fisher-KPP equation with slowly decaying data."""

__version__ = "0.1.0"
