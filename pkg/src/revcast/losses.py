"""Training losses (graph-aware) and evaluation metrics (plain numpy).

Metrics are meant to run on the original revenue scale, after inverse
transformation; SMAPE is the 0..2 variant.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError
from .tensor import Tensor

LOG_2PI = float(np.log(2.0 * np.pi))


def quantile_loss(y, pred, q: float):
    """Mean pinball loss: mean(max(q (y - p), (q - 1) (y - p))).

    ``y`` may be a plain array; ``pred`` is a Tensor so gradients flow.
    Returns a scalar Tensor.
    """
    if not 0.0 < q < 1.0:
        raise ContractError(f"quantile must lie in (0,1), got {q}")
    if not isinstance(y, Tensor):
        y = Tensor(y)
    diff = T.sub(y, pred)
    return T.tmean(T.maximum(T.mul(diff, q), T.mul(diff, q - 1.0)))


def gaussian_nll(y, mu, sigma):
    """Mean negative log likelihood of y under N(mu, sigma^2); Tensors in, scalar Tensor out."""
    if not isinstance(y, Tensor):
        y = Tensor(y)
    z = T.div(T.sub(y, mu), sigma)
    return T.tmean(T.add(T.add(T.log(sigma), T.mul(T.mul(z, z), 0.5)), 0.5 * LOG_2PI))


def _check_lengths(y, pred):
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    if y.shape != pred.shape or y.size == 0:
        raise ShapeError(f"metric inputs must be equal-length and non-empty, got {y.shape} and {pred.shape}")
    return y, pred


def mae(y, pred) -> float:
    y, pred = _check_lengths(y, pred)
    return float(np.abs(y - pred).mean())


def mape(y, pred, eps: float = 1e-6) -> float:
    y, pred = _check_lengths(y, pred)
    return float((np.abs(y - pred) / np.maximum(np.abs(y), eps)).mean())


def smape(y, pred, eps: float = 1e-6) -> float:
    y, pred = _check_lengths(y, pred)
    return float((2.0 * np.abs(y - pred) / (np.abs(y) + np.abs(pred) + eps)).mean())
