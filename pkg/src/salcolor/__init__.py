"""Saliency-guided colorization: model, training loop, and evaluation tools."""

__version__ = "0.1.0"
