"""Training objectives: binary cross-entropy on probabilities, token cross-entropy."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor

_CLAMP = 1e-12


def bce_loss(p: Tensor, y) -> Tensor:
    """Binary cross-entropy -[y ln p + (1-y) ln(1-p)], probabilities clamped
    at 1e-12 for stability. Array inputs reduce to the mean."""
    p = as_tensor(p)
    y = np.asarray(y, dtype=np.float64)
    pc = p.clamp(_CLAMP, 1.0 - _CLAMP)
    per = -(Tensor(y) * pc.log() + Tensor(1.0 - y) * (1.0 - pc).log())
    return per.mean() if per.size > 1 else per.reshape(())


def cross_entropy_loss(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single (V,) logit vector."""
    logits = as_tensor(logits)
    if not 0 <= target < logits.shape[-1]:
        raise ValueError(f"target {target} out of range for {logits.shape[-1]} classes")
    return -logits.log_softmax()[target]


def cross_entropy_batch(logits: Tensor, targets: np.ndarray,
                        mask: np.ndarray | None = None) -> Tensor:
    """Mean -log softmax over a (B, V) batch; masked positions are skipped."""
    B = logits.shape[0]
    lp = logits.log_softmax()
    picked = lp[np.arange(B), targets]
    if mask is None:
        return -picked.mean()
    m = mask.astype(np.float64)
    return -(picked * Tensor(m)).sum() * (1.0 / m.sum())


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Plain numpy softmax (used outside the autodiff graph)."""
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)
