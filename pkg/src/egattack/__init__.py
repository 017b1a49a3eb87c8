"""Explanation-guided adversarial attacks on binary tabular classifiers."""

__version__ = "0.1.0"
