"""Intrinsic Fokker-Planck machinery on the two-sphere and flat torus."""

__version__ = "0.1.0"
