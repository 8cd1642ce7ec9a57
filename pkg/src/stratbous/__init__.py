"""Spectral solver and verification harness for the stratified Boussinesq
system on the horizontally periodic strip T^{d-1} x [-1, 1]."""

__version__ = "0.1.0"
