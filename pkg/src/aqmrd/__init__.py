"""AQMRD: rate-aware active queue management and a dumbbell simulator to evaluate it."""

__version__ = "0.1.0"
