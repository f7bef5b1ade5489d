"""Queue-driven constrained online convex optimization."""

__version__ = "0.1.0"
