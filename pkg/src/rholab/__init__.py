"""Numerical laboratory for critical radius functions, rho-adapted weights
and mixed weak-type inequalities on discrete lattices."""

__version__ = "0.1.0"
