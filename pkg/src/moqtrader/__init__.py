"""Multi-objective deep Q-learning engine for single-asset trading."""

__version__ = "0.1.0"
