"""Simulation toolkit for a chip-to-chip teleported CNOT over a shared photon pair."""

__version__ = "0.1.0"
