"""BPSK modulation and the pilot + zero-padding + data frame layout.

Each frame of length N starts with an L-slot prefix in which device i places
its pilot in slot i - 1 and stays silent elsewhere, so pilots never overlap in
time. The remaining N_d = N - L slots carry the device's data symbols.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Unit-energy pilot, same per-symbol power as BPSK data.
PILOT_VALUE = 1.0 + 0.0j

# Index 0 is +1 (bit 0): argmin tie-breaks resolve to the lowest index.
BPSK_CONSTELLATION = np.array([1.0 + 0.0j, -1.0 + 0.0j])


@dataclass(frozen=True)
class FrameConfig:
    """Frame geometry: l devices per resource block, n_d data symbols, n = l + n_d."""

    l: int
    n_d: int
    modulation_order: int = 2

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("need at least one device slot (l >= 1)")
        if self.n_d < 1:
            raise ValueError("need at least one data symbol (n_d >= 1)")
        if self.modulation_order != 2:
            raise ValueError("only BPSK (modulation order 2) is supported")

    @classmethod
    def from_frame_size(cls, l: int, n: int, modulation_order: int = 2) -> "FrameConfig":
        return cls(l=l, n_d=n - l, modulation_order=modulation_order)

    @property
    def n(self) -> int:
        return self.l + self.n_d

    @property
    def bits_per_frame(self) -> int:
        return self.n_d * int(np.log2(self.modulation_order))

    @property
    def delta(self) -> float:
        """Data-to-frame size ratio n_d / n, always in (0, 1)."""
        return self.n_d / self.n


def frame_ratio(config: FrameConfig) -> float:
    return config.delta


def modulate_bpsk(bits) -> np.ndarray:
    """Map bits to BPSK symbols: 0 -> +1, 1 -> -1 (unit energy)."""
    bits = np.asarray(bits)
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("bits must be 0 or 1")
    return (1.0 - 2.0 * bits).astype(complex)


def demodulate_bpsk(symbols) -> np.ndarray:
    """Hard decision: Re >= 0 -> bit 0, Re < 0 -> bit 1."""
    symbols = np.asarray(symbols)
    return (symbols.real < 0).astype(np.int64)


def build_frame(i: int, pilot: complex, data: np.ndarray,
                config: FrameConfig) -> np.ndarray:
    """Frame for device i (1-based): pilot in prefix slot i - 1, zeros in the
    other l - 1 prefix slots, data in slots l .. n - 1."""
    if not 1 <= i <= config.l:
        raise ValueError(f"device index {i} out of range 1..{config.l}")
    data = np.asarray(data, dtype=complex)
    if data.shape != (config.n_d,):
        raise ValueError(f"data must have length {config.n_d}, got {data.shape}")
    frame = np.zeros(config.n, dtype=complex)
    frame[i - 1] = pilot
    frame[config.l:] = data
    return frame


def build_frames_batch(symbols: np.ndarray, config: FrameConfig,
                       pilot: complex = PILOT_VALUE) -> np.ndarray:
    """Frames for devices 1..k from a (B, k, n_d) symbol array -> (B, k, n)."""
    b, k, n_d = symbols.shape
    if n_d != config.n_d or k > config.l:
        raise ValueError("symbol array does not match frame config")
    frames = np.zeros((b, k, config.n), dtype=complex)
    idx = np.arange(k)
    frames[:, idx, idx] = pilot
    frames[:, :, config.l:] = symbols
    return frames
