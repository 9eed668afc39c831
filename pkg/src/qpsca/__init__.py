"""Power side-channel reconstruction of pulse-level quantum circuits."""

__version__ = "0.1.0"
