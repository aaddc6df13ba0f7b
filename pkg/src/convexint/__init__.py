"""Constructive convex-integration engine for transport-diffusion equations
on the periodic torus."""

__version__ = "0.1.0"
