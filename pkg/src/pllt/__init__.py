"""Virtual phase-locked-loop vibration testing of Duffing oscillators."""

__version__ = "0.1.0"
