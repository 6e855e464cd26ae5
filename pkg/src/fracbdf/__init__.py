"""BDF convolution quadrature with starting-step corrections for fractional evolution equations."""

__version__ = "0.1.0"
