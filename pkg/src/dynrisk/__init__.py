"""Hourly cardiogenic shock risk trajectories from ICU time series."""

__version__ = "0.1.0"
