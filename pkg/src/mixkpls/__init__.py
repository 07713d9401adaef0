"""Mixed-categorical Gaussian processes with matrix-PLS reduced kernels."""

__version__ = "0.1.0"
