"""Pseudo-spectral laboratory for the 2D Boussinesq system with transport noise."""

__version__ = "0.1.0"
