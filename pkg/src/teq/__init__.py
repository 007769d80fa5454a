"""Alert-fatigue reduction toolkit."""

__version__ = "0.1.0"
