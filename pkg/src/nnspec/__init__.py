"""nnspec: compile high-level ML model specifications into verifier queries."""

__version__ = "0.1.0"
