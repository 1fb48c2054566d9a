"""Global LSTM forecasting over feature-based clusters of time series."""

__version__ = "0.1.0"
