"""The two-layer LSTM detector network: input -> LSTM -> LSTM -> dense readout.

Parameters are exposed as an ordered mapping of named blocks so the optimizer,
gradient checker and checkpoint code all walk them in one fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (
    DenseParams,
    LstmLayerParams,
    dense_backward,
    dense_forward,
    init_dense,
    init_lstm_layer,
    lstm_backward,
    lstm_forward,
)
from .loss import half_mse, half_mse_grad

_LSTM_FIELDS = ("w_i", "w_f", "w_o", "w_g", "u_i", "u_f", "u_o", "u_g",
                "b_i", "b_f", "b_o", "b_g")

DEFAULT_HIDDEN = (80, 60)


@dataclass
class Network:
    lstm1: LstmLayerParams
    lstm2: LstmLayerParams
    dense: DenseParams

    @property
    def input_dim(self) -> int:
        return self.lstm1.input_dim

    @property
    def output_dim(self) -> int:
        return self.dense.output_dim

    @property
    def hidden_dims(self) -> tuple[int, int]:
        return (self.lstm1.hidden_dim, self.lstm2.hidden_dim)


def init_network(rng: np.random.Generator, input_dim: int, output_dim: int,
                 hidden_dims: tuple[int, int] = DEFAULT_HIDDEN,
                 dtype=np.float64) -> Network:
    h1, h2 = hidden_dims
    return Network(
        lstm1=init_lstm_layer(rng, input_dim, h1, dtype=dtype),
        lstm2=init_lstm_layer(rng, h1, h2, dtype=dtype),
        dense=init_dense(rng, h2, output_dim, dtype=dtype),
    )


def param_blocks(net: Network) -> dict[str, np.ndarray]:
    """Named parameter arrays in a fixed, deterministic order."""
    blocks: dict[str, np.ndarray] = {}
    for layer_name, layer in (("lstm1", net.lstm1), ("lstm2", net.lstm2)):
        for field in _LSTM_FIELDS:
            blocks[f"{layer_name}.{field}"] = getattr(layer, field)
    blocks["dense.weights"] = net.dense.weights
    blocks["dense.biases"] = net.dense.biases
    return blocks


def set_param_blocks(net: Network, blocks: dict[str, np.ndarray]) -> None:
    for name, value in blocks.items():
        layer_name, field = name.split(".")
        layer = getattr(net, layer_name)
        if getattr(layer, field).shape != value.shape:
            raise ValueError(f"shape mismatch for block {name}")
        setattr(layer, field, value)


def param_count(net: Network) -> int:
    return sum(block.size for block in param_blocks(net).values())


def closed_form_param_count(input_dim: int, hidden_dims: tuple[int, int],
                            output_dim: int) -> int:
    h1, h2 = hidden_dims
    lstm1 = 4 * (h1 * input_dim + h1 * h1 + h1)
    lstm2 = 4 * (h2 * h1 + h2 * h2 + h2)
    dense = output_dim * h2 + output_dim
    return lstm1 + lstm2 + dense


def forward(net: Network, x: np.ndarray, want_cache: bool = False):
    """Full forward pass. Returns outputs (B, L, T), optionally with the
    per-layer caches needed for backprop."""
    h1, cache1 = lstm_forward(net.lstm1, x)
    h2, cache2 = lstm_forward(net.lstm2, h1)
    out = dense_forward(net.dense, h2)
    if want_cache:
        return out, (cache1, cache2)
    return out


def backprop(net: Network, x: np.ndarray, target: np.ndarray):
    """Loss and exact gradients of half_mse w.r.t. every parameter block.

    Returns (loss, grads) with grads keyed like param_blocks(net).
    """
    x = np.asarray(x)
    target = np.asarray(target)
    if x.ndim == 2:
        x = x[None]
    if target.ndim == 2:
        target = target[None]
    if x.shape[0] == 0:
        raise ValueError("empty batch")

    out, (cache1, cache2) = forward(net, x, want_cache=True)
    loss = half_mse(out, target)
    d_out = half_mse_grad(out, target)

    dense_grads, d_h2 = dense_backward(net.dense, cache2.hidden, d_out)
    lstm2_grads, d_h1 = lstm_backward(net.lstm2, cache2, d_h2)
    lstm1_grads, _ = lstm_backward(net.lstm1, cache1, d_h1)

    grads: dict[str, np.ndarray] = {}
    for layer_name, layer_grads in (("lstm1", lstm1_grads), ("lstm2", lstm2_grads)):
        for field in _LSTM_FIELDS:
            grads[f"{layer_name}.{field}"] = layer_grads[field]
    grads["dense.weights"] = dense_grads["weights"]
    grads["dense.biases"] = dense_grads["biases"]
    return loss, grads


def network_astype(net: Network, dtype) -> Network:
    """Copy of the network with every parameter cast (e.g. float32 inference)."""
    def cast_lstm(layer: LstmLayerParams) -> LstmLayerParams:
        return LstmLayerParams(**{f: getattr(layer, f).astype(dtype)
                                  for f in _LSTM_FIELDS})

    return Network(
        lstm1=cast_lstm(net.lstm1),
        lstm2=cast_lstm(net.lstm2),
        dense=DenseParams(weights=net.dense.weights.astype(dtype),
                          biases=net.dense.biases.astype(dtype)),
    )
