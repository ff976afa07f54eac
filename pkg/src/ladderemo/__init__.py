"""Ladder networks for regression of arousal, valence and dominance."""

__version__ = "0.1.0"
