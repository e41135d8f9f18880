"""Numerical laboratory for blow-up of damped semilinear wave equations."""

__version__ = "0.1.0"
