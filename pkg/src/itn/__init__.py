"""Inverse text normalization: grammar-driven data augmentation and a neural tagger."""

__version__ = "0.1.0"
FORMAT_VERSION = 1
