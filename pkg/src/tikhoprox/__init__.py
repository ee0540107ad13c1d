"""Tikhonov-regularised proximal point algorithm with rescaling schedules."""

__version__ = "0.1.0"
