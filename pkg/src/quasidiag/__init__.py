"""Convergent Jacobi-rotation diagonalisation of quasiperiodic lattice operators
with monotone potentials, plus an independent dense-eigensolver oracle."""

__version__ = "0.1.0"
