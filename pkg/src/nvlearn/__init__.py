"""Feature-based newsvendor ordering with neural and linear models."""

__version__ = "0.1.0"
