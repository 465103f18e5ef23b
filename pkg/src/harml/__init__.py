"""Classical classifiers and a reproduction harness for smartphone HAR data."""

__version__ = "0.1.0"
