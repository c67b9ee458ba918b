"""Bayesian recovery of a discontinuous heat source in the unit disc from
sparse boundary-flux measurements taken by two relocatable sensors."""

__version__ = "0.1.0"
