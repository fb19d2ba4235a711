"""gasl: a benchmark framework for embedding-aware generative any-shot learning."""

__version__ = "0.1.0"
