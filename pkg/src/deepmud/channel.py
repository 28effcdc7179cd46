"""Complex-baseband uplink channel: Rayleigh block fading, AWGN, superposition.

All devices transmit with equal power P = rho * N0 (N0 = 1 by default), so the
operating SNR rho is set entirely through the power profile. The near/far
structure lives in the channel variances: device i is 3 dB stronger on average
than device i+1, and the weakest active device is anchored at 0 dB.

Every random draw goes through an explicit ``numpy.random.Generator`` so that
simulations and datasets are reproducible from a single seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# Average-channel-power step between adjacent devices: 3 dB.
LADDER_STEP_DB = 3.0


@dataclass(frozen=True)
class PowerProfile:
    """Transmit SNR shared by all active devices plus their average channel powers.

    ``device_channel_power`` holds E[|h_i|^2] as linear ratios, strongest
    device first, weakest anchored at 1.0 (0 dB).
    """

    transmit_snr_db: float
    device_channel_power: tuple[float, ...]

    def __post_init__(self):
        if len(self.device_channel_power) == 0:
            raise ValueError("power profile needs at least one device")
        powers = np.asarray(self.device_channel_power, dtype=float)
        if not np.all(np.isfinite(powers)) or np.any(powers <= 0):
            raise ValueError("channel powers must be positive and finite")
        if abs(powers[-1] - 1.0) > 1e-9:
            raise ValueError("weakest device must be anchored at 0 dB (power 1.0)")
        step = 10.0 ** (LADDER_STEP_DB / 10.0)
        if not np.allclose(powers[:-1], powers[1:] * step, rtol=1e-9):
            raise ValueError("adjacent devices must differ by exactly 3 dB")

    @classmethod
    def ladder(cls, transmit_snr_db: float, k: int) -> "PowerProfile":
        """Profile for ``k`` active devices on the 3 dB ladder, weakest at 0 dB."""
        if k < 1:
            raise ValueError("need at least one device")
        exponents = np.arange(k - 1, -1, -1, dtype=float)
        powers = tuple(10.0 ** (LADDER_STEP_DB * m / 10.0) for m in exponents)
        return cls(transmit_snr_db=transmit_snr_db, device_channel_power=powers)

    def at_snr(self, transmit_snr_db: float) -> "PowerProfile":
        return replace(self, transmit_snr_db=transmit_snr_db)

    @property
    def transmit_power(self) -> float:
        """Per-device transmit power P = rho * N0 with N0 = 1."""
        return 10.0 ** (self.transmit_snr_db / 10.0)

    @property
    def num_devices(self) -> int:
        return len(self.device_channel_power)


@dataclass(frozen=True)
class NoiseConfig:
    """AWGN with total complex variance ``n0`` (``n0 / 2`` per real dimension)."""

    n0: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.n0) or self.n0 <= 0:
            raise ValueError("noise variance n0 must be positive")

    @property
    def per_dimension_variance(self) -> float:
        return self.n0 / 2.0


def draw_channels(rng: np.random.Generator, profile: PowerProfile, k: int,
                  size: int | None = None) -> np.ndarray:
    """Draw block-fading coefficients h_i ~ CN(0, E[|h_i|^2]) for k devices.

    Returns shape (k,) complex128, or (size, k) when ``size`` is given.
    Magnitudes are Rayleigh distributed with scale sqrt(E[|h_i|^2] / 2).
    """
    if k < 1:
        raise ValueError("cannot draw channels for zero devices")
    if profile.num_devices < k:
        raise ValueError(f"profile has {profile.num_devices} devices, need {k}")
    std = np.sqrt(np.asarray(profile.device_channel_power[:k]) / 2.0)
    shape = (k,) if size is None else (size, k)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return std * (re + 1j * im)


def draw_noise(rng: np.random.Generator, noise: NoiseConfig, length: int,
               size: int | None = None) -> np.ndarray:
    """Draw zero-mean complex AWGN with total variance ``noise.n0`` per sample.

    Returns shape (length,), or (size, length) when ``size`` is given.
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    std = np.sqrt(noise.per_dimension_variance)
    shape = (length,) if size is None else (size, length)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return std * (re + 1j * im)


def superimpose(frames, channels: np.ndarray, profile: PowerProfile,
                noise: np.ndarray) -> np.ndarray:
    """Received frame y[t] = sum_i sqrt(P_i) * h_i * frames[i][t] + noise[t].

    ``frames`` is a sequence of K equal-length complex vectors (or a (K, N)
    array), ``channels`` the K fading coefficients for this frame. K = 0 is
    allowed and returns the noise alone.
    """
    noise = np.asarray(noise)
    frames = np.asarray(frames, dtype=complex)
    if frames.size == 0:
        return noise.astype(complex, copy=True)
    if frames.ndim != 2:
        raise ValueError("frames must be a (K, N) stack of equal-length vectors")
    k, n = frames.shape
    channels = np.asarray(channels)
    if channels.shape != (k,):
        raise ValueError(f"expected {k} channel coefficients, got {channels.shape}")
    if noise.shape != (n,):
        raise ValueError(f"noise length {noise.shape} does not match frame length {n}")
    amp = np.sqrt(profile.transmit_power)
    y = (amp * channels)[:, None] * frames
    return y.sum(axis=0) + noise


def superimpose_batch(frames: np.ndarray, channels: np.ndarray,
                      profile: PowerProfile, noise: np.ndarray) -> np.ndarray:
    """Vectorized superposition over a batch: (B, K, N) frames, (B, K) channels,
    (B, N) noise -> (B, N) received frames."""
    amp = np.sqrt(profile.transmit_power)
    return np.einsum("bk,bkn->bn", amp * channels, frames) + noise
