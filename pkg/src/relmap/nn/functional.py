"""Losses and activations built from :mod:`relmap.nn.tensor` operations."""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor, where

__all__ = ["huber", "glu", "dropout", "linear"]


def huber(pred, target, mask, gamma: float = 1.0) -> Tensor:
    """Mean Huber loss over entries where ``mask`` is true.

    ``0.5 r**2`` for ``|r| <= gamma`` and ``gamma * (|r| - gamma/2)`` beyond.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), pred.shape)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("huber loss over an empty mask")
    r = pred - target
    a = r.abs()
    quad = 0.5 * r * r
    lin = gamma * (a - 0.5 * gamma)
    per = where(a.data <= gamma, quad, lin)
    return (per * mask.astype(np.float64)).sum() / float(count)


def glu(a, b) -> Tensor:
    """Gated linear unit ``a * sigmoid(b)``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a * b.sigmoid()


def dropout(x, p: float, rng: np.random.Generator | None, training: bool = True) -> Tensor:
    """Inverted dropout: zero with probability ``p``, rescale survivors by ``1/(1-p)``."""
    x = as_tensor(x)
    if not training or p <= 0 or rng is None:
        return x
    keep = rng.uniform(size=x.shape) >= p
    return x * (keep / (1.0 - p))


def linear(x, weight, bias=None) -> Tensor:
    out = as_tensor(x) @ weight
    return out + bias if bias is not None else out
