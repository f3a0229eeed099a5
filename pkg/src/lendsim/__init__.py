"""Block-stepped simulator of a pooled lending protocol with an analytics pipeline."""

__version__ = "0.1.0"
