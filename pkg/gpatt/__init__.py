"""GPatt: Gaussian-process pattern extrapolation on grid-structured data."""

__version__ = "0.1.0"
