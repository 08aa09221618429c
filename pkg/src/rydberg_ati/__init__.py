"""Pair-state simulation of Autler-Townes imaging of a Rydberg excitation in 87Rb."""

__version__ = "0.1.0"
