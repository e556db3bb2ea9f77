"""Membrane-potential perturbation dynamics in leaky integrate-and-fire networks."""

__version__ = "0.1.0"
