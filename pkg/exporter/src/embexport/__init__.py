"""Embedding dataset exporter built on frozen encoders."""

__version__ = "0.1.0"
