"""Reservoir computing (RC), next-generation RC and hybrid RC-NGRC forecasting."""
from .kernels import BACKEND, HAVE_EXTENSION

__version__ = "0.1.0"
