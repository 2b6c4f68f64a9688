"""Fourier-interpolation solver for decoupled one-dimensional FBSDEs."""

__version__ = "0.1.0"
