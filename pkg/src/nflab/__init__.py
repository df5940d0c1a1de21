"""Simulation and analysis toolkit for adaptive transport-network formation."""

__version__ = "0.1.0"
