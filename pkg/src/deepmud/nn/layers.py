"""LSTM and dense layers with hand-written forward/backward passes.

Sequence arrays are batch-first: (batch, features, steps). Single sequences of
shape (features, steps) are accepted everywhere and returned in kind.

The LSTM cell is the standard one (no peepholes):

    i = sigmoid(w_i x + u_i h_prev + b_i)      input gate
    f = sigmoid(w_f x + u_f h_prev + b_f)      forget gate
    o = sigmoid(w_o x + u_o h_prev + b_o)      output gate
    g = tanh(w_g x + u_g h_prev + b_g)         candidate
    c = f * c_prev + i * g
    h = o * tanh(c)

with h_0 = c_0 = 0. Internally the four gates are stacked into single
(4H x D) / (4H x H) matrices and the input-to-gate products are batched over
all steps in one GEMM; only the recurrent chain runs step by step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

_GATE_FIELDS = ("i", "f", "o", "g")


@dataclass
class LstmLayerParams:
    """Gate weights (hidden x input), recurrent weights (hidden x hidden), biases."""

    w_i: np.ndarray
    w_f: np.ndarray
    w_o: np.ndarray
    w_g: np.ndarray
    u_i: np.ndarray
    u_f: np.ndarray
    u_o: np.ndarray
    u_g: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.w_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_i.shape[1]

    def stacked(self):
        """(4H x D), (4H x H), (4H,) copies in gate order i, f, o, g."""
        w = np.concatenate([self.w_i, self.w_f, self.w_o, self.w_g], axis=0)
        u = np.concatenate([self.u_i, self.u_f, self.u_o, self.u_g], axis=0)
        b = np.concatenate([self.b_i, self.b_f, self.b_o, self.b_g])
        return w, u, b


@dataclass
class LstmCache:
    """Time-major activations kept for backpropagation through time."""

    x: np.ndarray        # (T, B, D) layer input
    gates: np.ndarray    # (T, B, 4H) post-activation [i, f, o, g]
    cell: np.ndarray     # (T, B, H) cell state c_t
    tanh_cell: np.ndarray
    hidden_tm: np.ndarray  # (T, B, H) hidden state h_t, time-major
    hidden: np.ndarray   # (B, H, T) hidden state, as returned to callers


@dataclass
class DenseParams:
    """Per-step affine readout: weights (outputs x hidden), biases (outputs,)."""

    weights: np.ndarray
    biases: np.ndarray

    @property
    def output_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weights.shape[1]


def init_lstm_layer(rng: np.random.Generator, input_dim: int, hidden_dim: int,
                    dtype=np.float64) -> LstmLayerParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases except the
    forget gate bias at +1 to help gradient flow early in training."""
    def uniform(rows, cols):
        limit = 1.0 / np.sqrt(cols)
        return rng.uniform(-limit, limit, size=(rows, cols)).astype(dtype)

    return LstmLayerParams(
        w_i=uniform(hidden_dim, input_dim),
        w_f=uniform(hidden_dim, input_dim),
        w_o=uniform(hidden_dim, input_dim),
        w_g=uniform(hidden_dim, input_dim),
        u_i=uniform(hidden_dim, hidden_dim),
        u_f=uniform(hidden_dim, hidden_dim),
        u_o=uniform(hidden_dim, hidden_dim),
        u_g=uniform(hidden_dim, hidden_dim),
        b_i=np.zeros(hidden_dim, dtype=dtype),
        b_f=np.ones(hidden_dim, dtype=dtype),
        b_o=np.zeros(hidden_dim, dtype=dtype),
        b_g=np.zeros(hidden_dim, dtype=dtype),
    )


def init_dense(rng: np.random.Generator, input_dim: int, output_dim: int,
               dtype=np.float64) -> DenseParams:
    limit = 1.0 / np.sqrt(input_dim)
    return DenseParams(
        weights=rng.uniform(-limit, limit, size=(output_dim, input_dim)).astype(dtype),
        biases=np.zeros(output_dim, dtype=dtype),
    )


def _as_batch(x: np.ndarray):
    x = np.asarray(x)
    if x.ndim == 2:
        return x[None, :, :], True
    if x.ndim == 3:
        return x, False
    raise ValueError(f"expected (features, steps) or (batch, features, steps), got {x.shape}")


def lstm_forward(params: LstmLayerParams, x: np.ndarray):
    """Run the layer over all steps. Returns (hidden sequence, cache).

    hidden has shape (B, H, T) for (B, D, T) input (or (H, T) for (D, T) input,
    with a batched cache either way).
    """
    x, squeeze = _as_batch(x)
    b, d, t = x.shape
    h_dim = params.hidden_dim
    if d != params.input_dim:
        raise ValueError(f"input has {d} features, layer expects {params.input_dim}")

    dtype = params.w_i.dtype
    w, u, bias = params.stacked()
    xt = np.ascontiguousarray(np.moveaxis(x, 2, 0), dtype=dtype)  # (T, B, D)

    # Input-to-gate products for every step in one GEMM.
    pre = (xt.reshape(t * b, d) @ w.T).reshape(t, b, 4 * h_dim)
    pre += bias

    gates = np.empty((t, b, 4 * h_dim), dtype=dtype)
    cell = np.empty((t, b, h_dim), dtype=dtype)
    tcell = np.empty_like(cell)
    hidden_tm = np.empty_like(cell)

    h = np.zeros((b, h_dim), dtype=dtype)
    c = np.zeros((b, h_dim), dtype=dtype)
    for step in range(t):
        a = pre[step] + h @ u.T
        sigmoid(a[:, :3 * h_dim], out=a[:, :3 * h_dim])
        np.tanh(a[:, 3 * h_dim:], out=a[:, 3 * h_dim:])
        i = a[:, :h_dim]
        f = a[:, h_dim:2 * h_dim]
        o = a[:, 2 * h_dim:3 * h_dim]
        g = a[:, 3 * h_dim:]
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[step] = a
        cell[step] = c
        tcell[step] = tc
        hidden_tm[step] = h

    hidden = np.ascontiguousarray(np.moveaxis(hidden_tm, 0, 2))  # (B, H, T)
    cache = LstmCache(x=xt, gates=gates, cell=cell, tanh_cell=tcell,
                      hidden_tm=hidden_tm, hidden=hidden)
    out = hidden[0] if squeeze else hidden
    return out, cache


def lstm_backward(params: LstmLayerParams, cache: LstmCache, d_hidden: np.ndarray):
    """Backpropagate through time. ``d_hidden`` is the loss gradient w.r.t. the
    hidden sequence, (B, H, T). Returns (gradients dict keyed like the parameter
    fields, d_input of shape (B, D, T))."""
    d_hidden, _ = _as_batch(d_hidden)
    xt = cache.x
    t, b, d = xt.shape
    h_dim = params.hidden_dim
    dtype = xt.dtype
    w, u, _ = params.stacked()

    dht = np.moveaxis(d_hidden, 2, 0)  # (T, B, H) view
    d_gates = np.empty((t, b, 4 * h_dim), dtype=dtype)
    dh_rec = np.zeros((b, h_dim), dtype=dtype)
    dc_next = np.zeros((b, h_dim), dtype=dtype)
    zeros = np.zeros((b, h_dim), dtype=dtype)

    for step in range(t - 1, -1, -1):
        a = cache.gates[step]
        i = a[:, :h_dim]
        f = a[:, h_dim:2 * h_dim]
        o = a[:, 2 * h_dim:3 * h_dim]
        g = a[:, 3 * h_dim:]
        tc = cache.tanh_cell[step]
        c_prev = cache.cell[step - 1] if step > 0 else zeros

        dh = dht[step] + dh_rec
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)

        da = d_gates[step]
        da[:, :h_dim] = (dc * g) * i * (1.0 - i)
        da[:, h_dim:2 * h_dim] = (dc * c_prev) * f * (1.0 - f)
        da[:, 2 * h_dim:3 * h_dim] = do * o * (1.0 - o)
        da[:, 3 * h_dim:] = (dc * i) * (1.0 - g * g)

        dh_rec = da @ u
        dc_next = dc * f

    # Weight gradients batched over all steps.
    da_flat = d_gates.reshape(t * b, 4 * h_dim)
    h_prev = np.concatenate([np.zeros((1, b, h_dim), dtype=dtype),
                             cache.hidden_tm[:-1]], axis=0)
    dw = da_flat.T @ xt.reshape(t * b, d)
    du = da_flat.T @ h_prev.reshape(t * b, h_dim)
    db = da_flat.sum(axis=0)
    dx = np.moveaxis((da_flat @ w).reshape(t, b, d), 0, 2)

    grads = {}
    for rank, gate in enumerate(_GATE_FIELDS):
        rows = slice(rank * h_dim, (rank + 1) * h_dim)
        grads[f"w_{gate}"] = dw[rows]
        grads[f"u_{gate}"] = du[rows]
        grads[f"b_{gate}"] = db[rows]
    return grads, np.ascontiguousarray(dx)


def dense_forward(params: DenseParams, hidden_seq: np.ndarray) -> np.ndarray:
    """Apply the affine readout at every step: (B, H, T) -> (B, L, T)."""
    hidden_seq, squeeze = _as_batch(hidden_seq)
    if hidden_seq.shape[1] != params.input_dim:
        raise ValueError(f"hidden dim {hidden_seq.shape[1]} != {params.input_dim}")
    hidden_seq = hidden_seq.astype(params.weights.dtype, copy=False)
    out = np.einsum("lh,bht->blt", params.weights, hidden_seq)
    out += params.biases[None, :, None]
    return out[0] if squeeze else out


def dense_backward(params: DenseParams, hidden_seq: np.ndarray, d_out: np.ndarray):
    """Returns (gradients dict with 'weights'/'biases', d_hidden (B, H, T))."""
    hidden_seq, _ = _as_batch(hidden_seq)
    d_out, _ = _as_batch(d_out)
    grads = {
        "weights": np.einsum("blt,bht->lh", d_out, hidden_seq),
        "biases": d_out.sum(axis=(0, 2)),
    }
    d_hidden = np.einsum("lh,blt->bht", params.weights, d_out)
    return grads, d_hidden
