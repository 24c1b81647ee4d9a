"""Deterministic simulation lab: repeated-game incentives, Moran population
dynamics, and an estimator-triggered recovery game for a simulated
software-defined cyber-physical system."""

__version__ = "0.1.0"
