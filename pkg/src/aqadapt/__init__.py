"""Field calibration of low-cost NO2 sensors and concept-drift adaptation experiments."""

__version__ = "0.1.0"
