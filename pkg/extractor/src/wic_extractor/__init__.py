"""Offline client that turns usage-pair corpora into embedding stores."""

__version__ = "0.1.0"
