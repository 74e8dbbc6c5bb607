"""Speaker identification and verification from breath sounds."""

__version__ = "0.1.0"
