"""Symbol-guided visual planning from unlabeled play features."""

__version__ = "0.1.0"
