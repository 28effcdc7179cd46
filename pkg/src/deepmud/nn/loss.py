"""Half mean square error over per-device symbol sequences.

For one sample with L output rows, the loss is (1 / 2L) * sum_i ||target_i -
predicted_i||^2, where the norm runs over the sequence steps. Batches are
averaged so the learning-rate semantics do not depend on batch size.
"""

from __future__ import annotations

import numpy as np


def _check_shapes(predicted: np.ndarray, target: np.ndarray):
    if predicted.shape != target.shape:
        raise ValueError(f"shape mismatch: {predicted.shape} vs {target.shape}")
    if predicted.ndim not in (2, 3):
        raise ValueError("expected (L, T) or (batch, L, T) arrays")


def half_mse(predicted: np.ndarray, target: np.ndarray) -> float:
    predicted = np.asarray(predicted)
    target = np.asarray(target)
    _check_shapes(predicted, target)
    num_outputs = predicted.shape[-2]
    diff = target - predicted
    per_sample = (diff * diff).sum(axis=(-2, -1)) / (2.0 * num_outputs)
    return float(np.mean(per_sample))


def half_mse_grad(predicted: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of half_mse w.r.t. ``predicted`` (batch mean included)."""
    predicted = np.asarray(predicted)
    target = np.asarray(target)
    _check_shapes(predicted, target)
    num_outputs = predicted.shape[-2]
    batch = predicted.shape[0] if predicted.ndim == 3 else 1
    return (predicted - target) / (num_outputs * batch)
