"""Numerical lab for the capillary / one-phase Bernoulli correspondence."""

__version__ = "0.1.0"
