"""Dynamic graph neural network for next-step prediction of molecular distance graphs."""

__version__ = "0.1.0"
