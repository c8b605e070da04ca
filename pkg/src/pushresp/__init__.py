"""Lag-resolved push-response surface estimation in event time."""

__version__ = "0.1.0"
