"""Pure-state verification with adaptive local measurements."""

__version__ = "0.1.0"
