"""Gait Koopman - periodic latent dynamics of pose sequences for gait recognition."""

__version__ = "0.1.0"
