"""Certified Hausdorff dimension bounds for conformal graph directed Markov systems."""

__version__ = "0.1.0"
