"""Latent 3D Gaussian diffusion pipeline, desk scale."""

__version__ = "0.1.0"
