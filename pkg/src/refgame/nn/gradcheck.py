"""Central-difference validation of backward passes."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, no_grad, zero_grads


def gradient_check(loss_fn: Callable[[], Tensor], params: dict[str, Tensor],
                   epsilon: float = 1e-5, max_coords: int = 24,
                   rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples up to ``max_coords`` coordinates per parameter tensor. The error
    for one coordinate is |a - n| / (|a| + |n| + 1e-12).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    zero_grads(params)
    loss = loss_fn()
    if not np.isfinite(loss.data):
        raise ValueError(f"non-finite loss {loss.data!r}")
    loss.backward()
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in params.items()}

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords,
                                                                 replace=False)
        for c in coords:
            orig = flat[c]
            with no_grad():
                flat[c] = orig + epsilon
                up = float(loss_fn().data)
                flat[c] = orig - epsilon
                down = float(loss_fn().data)
            flat[c] = orig
            numeric = (up - down) / (2.0 * epsilon)
            a = analytic[name].reshape(-1)[c]
            err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst
