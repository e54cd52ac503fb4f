"""Small-dimension simulation and audit toolkit for quantum state redistribution."""

__version__ = "0.1.0"
