"""
Frame-wise training objectives for beat/downbeat activation curves, with
analytic gradients with respect to the predicted probabilities.

Losses are sums over frames. Predictions are clamped to ``[EPS, 1 - EPS]``
before taking logarithms; gradients are those of the clamped expression.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

EPS = 1e-7


@dataclass(frozen=True)
class LossConfig:
    positive_weight: float = 1.0
    pred_pool_width: int = 7
    label_pool_width: int = 13
    widen_weights: tuple = (0.5, 0.25)

    def __post_init__(self):
        for name in ("pred_pool_width", "label_pool_width"):
            k = getattr(self, name)
            if k < 1 or k % 2 == 0:
                raise ValueError(f"{name} must be an odd positive integer, got {k}")
        if not self.positive_weight > 0:
            raise ValueError("positive_weight must be positive")
        w = tuple(self.widen_weights)
        if any(not 0 < x < 1 for x in w) or any(a < b for a, b in zip(w, w[1:])):
            raise ValueError("widen_weights must lie in (0, 1) and be non-increasing")


def _pair(targets, preds) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(targets, dtype=float)
    p = np.asarray(preds, dtype=float)
    if y.shape != p.shape:
        raise ValueError(f"length mismatch: targets {y.shape} vs predictions {p.shape}")
    return y, np.clip(p, EPS, 1 - EPS)


def bce_loss(targets, preds) -> tuple[float, np.ndarray]:
    """Summed binary cross-entropy and its gradient ``(p - y) / (p (1 - p))``."""
    y, p = _pair(targets, preds)
    loss = -np.sum(y * np.log(p) + (1 - y) * np.log(1 - p))
    grad = (p - y) / (p * (1 - p))
    return float(loss), grad


def widen_targets(targets, widen_weights: Sequence[float] = (0.5, 0.25)) -> np.ndarray:
    """Spread each positive frame to its neighbours; overlaps keep the maximum."""
    y = np.asarray(targets, dtype=float)
    if np.any((y != 0) & (y != 1)):
        raise ValueError("targets must be binary")
    out = y.copy()
    n = len(y)
    for d, w in enumerate(widen_weights, start=1):
        if d >= n:
            break
        out[d:] = np.maximum(out[d:], w * y[:n - d])
        out[:n - d] = np.maximum(out[:n - d], w * y[d:])
    return out


def max_pool(x, width: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Centered sliding maximum with windows truncated at the edges.

    Returns the pooled values and, per output frame, the index of the
    leftmost maximizer in its window.
    """
    x = np.asarray(x, dtype=float)
    half = width // 2
    n = len(x)
    if n == 0:
        return x.copy(), np.zeros(0, dtype=np.int64)
    padded = np.concatenate((np.full(half, -np.inf), x, np.full(half, -np.inf)))
    windows = sliding_window_view(padded, width)
    arg = np.argmax(windows, axis=1)
    idx = np.arange(n) - half + arg
    return x[idx], idx


def shift_tolerant_bce(targets, preds, cfg: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """
    Shift-tolerant BCE.

    ``-sum_t [w y_t log(m7(p)_t) + (1 - m13(y)_t) log(1 - m7(p)_t)]`` where
    ``m_k`` is a centered max-pool of width ``k``. The gradient flows to the
    leftmost maximizer of each prediction window.
    """
    y, p = _pair(targets, preds)
    loss, grad_pooled, arg = _st_terms(y, p, cfg)
    grad = np.zeros_like(p)
    np.add.at(grad, arg, grad_pooled)
    return loss, grad


def _st_terms(y, p, cfg):
    pooled, arg = max_pool(p, cfg.pred_pool_width)
    label_mask = 1.0 - max_pool(y, cfg.label_pool_width)[0]
    w = cfg.positive_weight
    loss = -np.sum(w * y * np.log(pooled) + label_mask * np.log(1 - pooled))
    grad_pooled = -w * y / pooled + label_mask / (1 - pooled)
    return float(loss), grad_pooled, arg


def shift_tolerant_terms(targets, preds, cfg: LossConfig = LossConfig()) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame positive and negative contributions of :func:`shift_tolerant_bce`."""
    y, p = _pair(targets, preds)
    pooled, _ = max_pool(p, cfg.pred_pool_width)
    label_mask = 1.0 - max_pool(y, cfg.label_pool_width)[0]
    return -cfg.positive_weight * y * np.log(pooled), -label_mask * np.log(1 - pooled)


def positive_weight_from_targets(all_targets) -> float:
    """Ratio of negative to positive frames over a collection of target vectors."""
    ones = zeros = 0
    for t in all_targets:
        t = np.asarray(t)
        ones += int(np.count_nonzero(t == 1))
        zeros += int(np.count_nonzero(t == 0))
    if ones == 0:
        raise ValueError("no positive frames: positive weight is undefined")
    if zeros == 0:
        warnings.warn("no negative frames; positive weight is 0", RuntimeWarning, stacklevel=2)
    return zeros / ones


def combined_meter_loss(beat_targets, beat_preds, downbeat_targets, downbeat_preds) -> float:
    """Sum of the beat and downbeat BCE losses."""
    return bce_loss(beat_targets, beat_preds)[0] + bce_loss(downbeat_targets, downbeat_preds)[0]
