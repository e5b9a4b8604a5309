"""Nonlinear geometric optics laboratory for null-form wave equations."""

__version__ = "0.1.0"
