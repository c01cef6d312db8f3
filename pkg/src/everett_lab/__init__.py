"""Finite-observer simulation of no-collapse versus collapse measurement of qubit streams."""

__version__ = "0.1.0"
