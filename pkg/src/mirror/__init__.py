"""Bidirectional latent-variable dialogue generation stack."""

__version__ = "0.1.0"
