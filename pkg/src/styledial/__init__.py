"""Stylized dialogue response generation via a fused latent space."""

__version__ = "0.1.0"
