"""Delta video compression against a shared static background model."""

__version__ = "0.1.0"
