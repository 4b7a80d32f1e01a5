"""Expected information gain estimation with triangular transport maps."""

__version__ = "0.1.0"
