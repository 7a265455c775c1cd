"""Minimal tensor autodiff, losses and optimiser used to train the imputer."""
from .checkpoint import load_checkpoint, save_checkpoint
from .functional import dropout, glu, huber, linear
from .optim import AdamState, adam_step
from .tensor import NonFiniteError, Tensor, as_tensor, concat, conv_time, gradient, stack, where

__all__ = [
    "Tensor",
    "as_tensor",
    "concat",
    "stack",
    "where",
    "conv_time",
    "gradient",
    "NonFiniteError",
    "huber",
    "glu",
    "dropout",
    "linear",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]
