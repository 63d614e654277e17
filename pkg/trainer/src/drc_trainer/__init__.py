"""Trainer for the map-upgrading autoencoder: consumes DRCD datasets,
produces DRCW weights, and provides the reference forward pass."""

__version__ = "0.1.0"
