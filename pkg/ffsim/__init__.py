"""Fast-Forwarding simulator for mastery-learning problem selection."""

__version__ = "1.0.0"
