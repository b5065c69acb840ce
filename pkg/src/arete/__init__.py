"""Extract species occurrence records from text with chat-completion models."""

__version__ = "0.1.0"
