"""Tensor, autodiff and layer primitives.

Network-level modules (``network``, ``losses``, ``optim``) import the config
records from :mod:`crosscbam.models` and are imported directly by callers.
"""
from .params import BatchNormParams, ConvParams, Mode
from .tensor import Precision, Tensor, backward, no_grad

__all__ = [
    "BatchNormParams",
    "ConvParams",
    "Mode",
    "Precision",
    "Tensor",
    "backward",
    "no_grad",
]
