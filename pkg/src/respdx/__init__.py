"""Respiratory breath-test signal analysis: preprocessing, features, classification, causal matching."""

__version__ = "0.1.0"
