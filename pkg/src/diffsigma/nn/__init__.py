"""Minimal CPU neural network core: layers, losses, Adam and gradient checks."""
