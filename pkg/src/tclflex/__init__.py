"""Virtual-battery flexibility prediction for aggregated thermostatically controlled loads."""

__version__ = "0.1.0"
