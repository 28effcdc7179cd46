"""Finite-difference verification of the backpropagation gradients."""

from __future__ import annotations

import numpy as np

from .loss import half_mse
from .network import Network, backprop, forward, param_blocks


def gradient_check(net: Network, sample, epsilon: float = 1e-5,
                   grads: dict[str, np.ndarray] | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``sample`` is an (inputs, targets) pair. The error for each parameter is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12); a network whose
    gradients are all zero therefore reports 0. Pass ``grads`` to check an
    externally supplied gradient instead of the one backprop computes.
    """
    x, target = sample
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if grads is None:
        _, grads = backprop(net, x, target)

    def loss_at() -> float:
        return half_mse(forward(net, x if x.ndim == 3 else x[None]),
                        target if target.ndim == 3 else target[None])

    worst = 0.0
    for name, block in param_blocks(net).items():
        analytic = grads[name]
        flat = block.reshape(-1)
        numeric = np.empty(flat.shape)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + epsilon
            up = loss_at()
            flat[idx] = original - epsilon
            down = loss_at()
            flat[idx] = original
            numeric[idx] = (up - down) / (2.0 * epsilon)
        numeric = numeric.reshape(block.shape)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst
