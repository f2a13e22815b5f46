"""Evaluate marginal and joint predictive distributions of classifiers."""
from ._backend import NAME as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
