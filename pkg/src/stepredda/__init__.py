"""Robust stepwise wavelength selection and classification for spectra."""

__version__ = "0.1.0"
