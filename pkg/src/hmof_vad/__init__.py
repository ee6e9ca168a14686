"""Real-time video anomaly detection with magnitude optical-flow histograms."""

__version__ = "0.1.0"
