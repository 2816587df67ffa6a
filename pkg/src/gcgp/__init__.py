"""Graph condensation by matching Gaussian-process posterior predictions."""

__version__ = "0.1.0"
