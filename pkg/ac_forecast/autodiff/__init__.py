"""Reverse-mode differentiation for scalar computations."""
