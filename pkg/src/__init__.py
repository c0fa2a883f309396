"""MCST forecaster: selective state-space scans over time and sensors for multi-channel traffic."""

__version__ = "1.0.0"
