"""Simulation and Malliavin-weight Greeks for SDEs driven by rough fBm."""

__version__ = "0.1.0"
