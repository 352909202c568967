"""Post-synthesis delay/area prediction for gate-level netlists."""

__version__ = "0.1.0"
