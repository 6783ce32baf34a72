"""Numerical laboratory for sidewise control of 1-d variable-coefficient waves."""

__version__ = "0.1.0"
