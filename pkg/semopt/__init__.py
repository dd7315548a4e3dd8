"""semopt - a cost-based optimizer for semantic LLM pipelines."""

__version__ = "0.1.0"
