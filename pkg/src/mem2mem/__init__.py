"""Memory-to-memory hierarchical summarization."""

__version__ = "0.1.0"
