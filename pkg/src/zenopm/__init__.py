"""Zeno protective measurements of photon polarization with a temporal pointer."""

__version__ = "0.1.0"
