"""Streaming transducer translation over discrete speech tokens, at desk scale."""

__version__ = "0.1.0"
