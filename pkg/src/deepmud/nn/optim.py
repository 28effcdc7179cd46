"""ADAM optimizer with bias correction, operating on named parameter blocks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    first_moment: dict[str, np.ndarray]
    second_moment: dict[str, np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8


def adam_init(params: dict[str, np.ndarray], beta1: float = 0.9,
              beta2: float = 0.999, eps_stab: float = 1e-8) -> AdamState:
    return AdamState(
        first_moment={k: np.zeros_like(v) for k, v in params.items()},
        second_moment={k: np.zeros_like(v) for k, v in params.items()},
        step_count=0,
        beta1=beta1,
        beta2=beta2,
        eps_stab=eps_stab,
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, learning_rate: float) -> None:
    """One in-place ADAM update over all blocks.

    Raises FloatingPointError when any gradient is non-finite so the trainer
    can abort with a diagnostic instead of poisoning the parameters.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient in block {name}")

    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t
    for name, param in params.items():
        grad = grads[name]
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / bias1
        v_hat = v / bias2
        param -= learning_rate * m_hat / (np.sqrt(v_hat) + state.eps_stab)
