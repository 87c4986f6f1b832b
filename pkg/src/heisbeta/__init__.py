"""Heisenberg-group geometry, intrinsic Lipschitz graphs and multiscale
flatness experiments."""

from ._kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
