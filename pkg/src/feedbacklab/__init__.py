"""Feedback coding over AWGN channels: codes, bounds and Monte-Carlo checks."""

__version__ = "0.1.0"
