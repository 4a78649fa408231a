"""Sparsely activated networks and the phi compression/fidelity metric."""

__version__ = "0.1.0"
