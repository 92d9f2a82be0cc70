"""Simulation and analysis toolkit for adaptively controlled PXP circuits."""

__version__ = "0.1.0"
