"""Collision-perturbed two-level dynamics of the ammonia inversion line."""

__version__ = "0.1.0"
