"""Loss functions returning ``(loss, gradient)`` pairs."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch
from .layers import softmax


def softmax_xent(logits: np.ndarray, labels: np.ndarray, weights=None):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatch(f"logits {logits.shape} vs labels {labels.shape}")
    n, k = logits.shape
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    total = w.sum()
    loss = -(w * logp[np.arange(n), labels]).sum() / total
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    grad *= (w / total)[:, None]
    return float(loss), grad


def mse(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def l2_penalty(params: dict[str, np.ndarray], lam: float, names=None):
    """``lam / 2 * sum(theta ** 2)`` over the selected weights, with gradients ``lam * theta``."""
    names = [k for k in params if k.endswith("W") or k.endswith("U")] if names is None else names
    loss = 0.5 * lam * sum(float(np.sum(params[k] ** 2)) for k in names)
    return loss, {k: lam * params[k] for k in names}
