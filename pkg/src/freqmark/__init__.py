"""Frequency-based watermarking and detection for language-model text."""

__version__ = "0.1.0"
