"""Bose-Hubbard spectral tomography, Bogoliubov stability and classical dynamics."""

__version__ = "0.1.0"
