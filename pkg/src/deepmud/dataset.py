"""Training-data pipeline: input reforming and dataset generation.

A received frame y of length N = L + N_d is reformed into a real-valued
(2L + 2) x N_d sequence: for each of the L pilot slots, its real and imaginary
parts are replicated across all N_d steps, and the final two rows carry the
real and imaginary parts of the data segment. Targets are the transmitted BPSK
symbols of all L devices, (L, N_d) with entries in {-1, +1}.

Generation follows the frame-by-frame recipe: random bits per device, frame
construction, fresh Rayleigh channels and AWGN per frame, superposition, then
reforming. Samples are produced in fixed-size chunks with sub-seeds spawned
from the root seed, so the output is byte-identical for any worker count.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .channel import NoiseConfig, PowerProfile, draw_channels, draw_noise, superimpose_batch
from .framing import PILOT_VALUE, FrameConfig, build_frames_batch
from .iocontainer import read_container, write_container

if TYPE_CHECKING:
    from .training import TrainConfig

# Samples per generation chunk. Fixed so file bytes do not depend on worker
# count; changing it changes the raw stream layout and bumps the format docs.
DATASET_CHUNK = 4096


@dataclass
class Dataset:
    inputs: np.ndarray       # (num, 2l + 2, n_d) float64
    targets: np.ndarray      # (num, l, n_d) float64, entries in {-1, +1}
    snr_labels: np.ndarray   # (num,) float64, dB
    frame: FrameConfig
    device_channel_power: tuple[float, ...]
    snr_grid_db: tuple[float, ...]
    samples_per_snr: int
    seed: int | None

    @property
    def num_samples(self) -> int:
        return self.inputs.shape[0]


def reform_inputs(received_frame: np.ndarray, config: FrameConfig) -> np.ndarray:
    """Reform one frame (length n) into the (2l + 2) x n_d network input."""
    received_frame = np.asarray(received_frame)
    if received_frame.shape != (config.n,):
        raise ValueError(f"frame length {received_frame.shape} != {config.n}")
    return reform_inputs_batch(received_frame[None], config)[0]


def reform_inputs_batch(frames: np.ndarray, config: FrameConfig) -> np.ndarray:
    """(B, n) received frames -> (B, 2l + 2, n_d) float64 inputs."""
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[1] != config.n:
        raise ValueError(f"expected (batch, {config.n}) frames, got {frames.shape}")
    b = frames.shape[0]
    l, n_d = config.l, config.n_d
    out = np.empty((b, 2 * l + 2, n_d), dtype=np.float64)
    pilots = frames[:, :l]
    out[:, 0:2 * l:2, :] = pilots.real[:, :, None]
    out[:, 1:2 * l:2, :] = pilots.imag[:, :, None]
    data = frames[:, l:]
    out[:, 2 * l, :] = data.real
    out[:, 2 * l + 1, :] = data.imag
    return out


def restore_frame(inputs: np.ndarray, config: FrameConfig) -> np.ndarray:
    """Inverse of reform_inputs: rebuild the complex frame from the tensor rows."""
    inputs = np.asarray(inputs)
    if inputs.shape != (2 * config.l + 2, config.n_d):
        raise ValueError(f"expected ({2 * config.l + 2}, {config.n_d}), got {inputs.shape}")
    frame = np.empty(config.n, dtype=complex)
    frame[:config.l] = inputs[0:2 * config.l:2, 0] + 1j * inputs[1:2 * config.l:2, 0]
    frame[config.l:] = inputs[2 * config.l] + 1j * inputs[2 * config.l + 1]
    return frame


def frame_rms_batch(inputs: np.ndarray, config: FrameConfig) -> np.ndarray:
    """Per-frame RMS of the underlying N received samples, from the reformed
    tensor. Used as an AGC scale so detector inputs are O(1) at any SNR."""
    l = config.l
    pilot_sq = inputs[:, 0, 0] * 0.0
    for i in range(l):
        pilot_sq = pilot_sq + inputs[:, 2 * i, 0] ** 2 + inputs[:, 2 * i + 1, 0] ** 2
    data_sq = (inputs[:, 2 * l, :] ** 2 + inputs[:, 2 * l + 1, :] ** 2).sum(axis=1)
    return np.sqrt((pilot_sq + data_sq) / config.n)


def _chunk_sizes(total: int, chunk: int) -> list[int]:
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def _generate_chunk(args):
    rng, snr_db, count, l, n_d, k = args
    config = FrameConfig(l=l, n_d=n_d)
    profile = PowerProfile.ladder(snr_db, k)
    bits = rng.integers(0, 2, size=(count, k, n_d))
    symbols = 1.0 - 2.0 * bits
    frames = build_frames_batch(symbols.astype(complex), config, pilot=PILOT_VALUE)
    channels = draw_channels(rng, profile, k, size=count)
    noise = draw_noise(rng, NoiseConfig(1.0), config.n, size=count)
    received = superimpose_batch(frames, channels, profile, noise)
    inputs = reform_inputs_batch(received, config)
    return inputs, symbols.astype(np.float64)


def generate_dataset(seed, config: "TrainConfig", workers: int = 1) -> Dataset:
    """Build the full training set: samples_per_snr frames at every grid SNR,
    all l devices active. ``seed`` may be an int or a Generator; with an int
    the output is byte-identical across runs and worker counts."""
    if isinstance(seed, np.random.Generator):
        root, recorded_seed = seed, None
    else:
        root, recorded_seed = np.random.default_rng(seed), int(seed)

    frame = FrameConfig(l=config.l, n_d=config.n - config.l)
    snr_grid = tuple(float(s) for s in config.snr_grid_db)
    sizes = _chunk_sizes(config.samples_per_snr, DATASET_CHUNK)
    jobs = []
    for snr_db in snr_grid:
        for count in sizes:
            jobs.append((snr_db, count))
    children = root.spawn(len(jobs))
    args = [(child, snr_db, count, frame.l, frame.n_d, frame.l)
            for child, (snr_db, count) in zip(children, jobs)]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_generate_chunk, args, chunksize=1))
    else:
        results = [_generate_chunk(a) for a in args]

    inputs = np.concatenate([r[0] for r in results], axis=0)
    targets = np.concatenate([r[1] for r in results], axis=0)
    labels = np.concatenate([np.full(count, snr_db) for snr_db, count in jobs])
    return Dataset(
        inputs=inputs,
        targets=targets,
        snr_labels=labels,
        frame=frame,
        device_channel_power=PowerProfile.ladder(0.0, frame.l).device_channel_power,
        snr_grid_db=snr_grid,
        samples_per_snr=config.samples_per_snr,
        seed=recorded_seed,
    )


def dataset_config_hash(l: int, n: int, snr_grid_db, samples_per_snr: int,
                        seed) -> str:
    """Stable hash of everything that determines the generated samples."""
    payload = {
        "l": int(l),
        "n": int(n),
        "snr_grid_db": [float(s) for s in snr_grid_db],
        "samples_per_snr": int(samples_per_snr),
        "seed": seed if seed is None else int(seed),
        "pilot": [PILOT_VALUE.real, PILOT_VALUE.imag],
        "chunk": DATASET_CHUNK,
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
    return digest.hexdigest()


def save_dataset(dataset: Dataset, path) -> None:
    meta = {
        "l": dataset.frame.l,
        "n_d": dataset.frame.n_d,
        "n": dataset.frame.n,
        "modulation_order": dataset.frame.modulation_order,
        "device_channel_power": list(dataset.device_channel_power),
        "snr_grid_db": list(dataset.snr_grid_db),
        "samples_per_snr": dataset.samples_per_snr,
        "seed": dataset.seed,
        "config_hash": dataset_config_hash(dataset.frame.l, dataset.frame.n,
                                           dataset.snr_grid_db,
                                           dataset.samples_per_snr, dataset.seed),
    }
    blocks = {
        "inputs": dataset.inputs,
        "targets": dataset.targets,
        "snr_labels": dataset.snr_labels,
    }
    write_container(path, "dataset", meta, blocks)


def load_dataset(path) -> Dataset:
    meta, blocks = read_container(path, expected_kind="dataset")
    frame = FrameConfig(l=int(meta["l"]), n_d=int(meta["n_d"]),
                        modulation_order=int(meta.get("modulation_order", 2)))
    return Dataset(
        inputs=blocks["inputs"],
        targets=blocks["targets"],
        snr_labels=blocks["snr_labels"],
        frame=frame,
        device_channel_power=tuple(meta["device_channel_power"]),
        snr_grid_db=tuple(meta["snr_grid_db"]),
        samples_per_snr=int(meta["samples_per_snr"]),
        seed=meta["seed"],
    )


def dataset_file_hash(path) -> str:
    meta, _ = read_container(path, expected_kind="dataset")
    return meta["config_hash"]


def export_dataset_text(dataset: Dataset, path) -> None:
    """Portable text dump: '# key = value' header, then one 'sample <idx>
    snr <dB>' stanza per sample with input rows and target rows as %.17g."""
    with open(path, "w") as fh:
        fh.write(f"# l = {dataset.frame.l}\n")
        fh.write(f"# n_d = {dataset.frame.n_d}\n")
        fh.write(f"# samples_per_snr = {dataset.samples_per_snr}\n")
        fh.write(f"# snr_grid_db = {','.join('%g' % s for s in dataset.snr_grid_db)}\n")
        fh.write(f"# seed = {dataset.seed}\n")
        for idx in range(dataset.num_samples):
            fh.write(f"sample {idx} snr {dataset.snr_labels[idx]:g}\n")
            for row in dataset.inputs[idx]:
                fh.write("input " + " ".join("%.17g" % v for v in row) + "\n")
            for row in dataset.targets[idx]:
                fh.write("target " + " ".join("%.17g" % v for v in row) + "\n")
