"""Multiband (C+L+S) link simulation and launch-power / Raman-pump optimization."""

__version__ = "0.1.0"
