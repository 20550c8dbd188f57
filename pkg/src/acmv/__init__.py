"""Multi-view graph convolution + GRU + context attention population forecaster."""

__version__ = "0.1.0"
