"""Unified detection, identification and decoding of visual markers."""

__version__ = "0.1.0"
