"""Gaussian noise level estimation from the difference of two noisy frames."""

__version__ = "0.1.0"
