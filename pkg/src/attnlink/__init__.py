"""Attention-link regularization for a toy vision transformer."""

__version__ = "0.1.0"
