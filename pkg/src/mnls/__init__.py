"""Spectral simulator and estimate lab for cubic NLS on zonal S^3 and S^2 x S^1."""

__version__ = "0.1.0"
