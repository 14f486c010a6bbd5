"""Cooperative V2X perception and safety-reasoning sandbox."""

__version__ = "0.1.0"
