"""Rydberg dipole moments from Autler-Townes spectra: structure, lineshape, inference."""

__version__ = "0.1.0"
