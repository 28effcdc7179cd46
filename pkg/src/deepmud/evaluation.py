"""Monte Carlo BER harness, ensured-capacity bookkeeping and complexity counts.

Frames are simulated end to end (bits -> frames -> fading + noise -> detector
-> bits) in fixed-size chunks whose sub-seeds are spawned from the scenario
seed. Chunks are dispatched in fixed rounds so results are byte-identical for
any worker count; the adaptive stop rule (enough bit errors per device, or the
frame cap) is evaluated only at round boundaries on merged integer tallies.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .channel import NoiseConfig, PowerProfile, draw_channels, draw_noise, superimpose_batch
from .framing import PILOT_VALUE, FrameConfig, build_frames_batch, demodulate_bpsk
from .sic import sic_detect_batch

DETECTORS = ("sic_perfect", "sic_ls", "deepmud")

# Frames per simulation chunk and chunks per stop-rule round. Fixed constants:
# changing them changes which frames are simulated for a given seed.
MC_CHUNK = 2000
MC_ROUND_CHUNKS = 4


@dataclass(frozen=True)
class SimScenario:
    frame: FrameConfig
    snr_grid_db: tuple[float, ...]
    detector: str
    k_active: int
    seed: int
    max_frames: int = 200_000
    target_errors: int = 100

    def __post_init__(self):
        if self.detector not in DETECTORS:
            raise ValueError(f"unknown detector {self.detector!r}")
        if not 1 <= self.k_active <= self.frame.l:
            raise ValueError("k_active must be in 1..L")
        if len(self.snr_grid_db) == 0:
            raise ValueError("SNR grid must be non-empty")
        if self.max_frames < 1:
            raise ValueError("frame budget must be >= 1")

    @property
    def scenario_id(self) -> str:
        payload = {
            "l": self.frame.l, "n_d": self.frame.n_d,
            "snr_grid_db": [float(s) for s in self.snr_grid_db],
            "detector": self.detector, "k_active": self.k_active,
            "seed": self.seed, "max_frames": self.max_frames,
            "target_errors": self.target_errors,
        }
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
        return digest.hexdigest()[:12]


@dataclass(frozen=True)
class BerRow:
    device: int          # 1-based transmit-side index (1 = strongest on average)
    snr_db: float
    bits: int
    errors: int
    ber: float
    ci_low: float
    ci_high: float


@dataclass
class BerReport:
    scenario: SimScenario
    rows: list[BerRow] = field(default_factory=list)

    def row(self, device: int, snr_db: float) -> BerRow:
        for r in self.rows:
            if r.device == device and r.snr_db == snr_db:
                return r
        raise KeyError((device, snr_db))

    def ber(self, device: int, snr_db: float) -> float:
        return self.row(device, snr_db).ber

    def max_ber(self, snr_db: float) -> float:
        return max(r.ber for r in self.rows if r.snr_db == snr_db)

    def device_bers(self, snr_db: float) -> np.ndarray:
        rows = sorted((r for r in self.rows if r.snr_db == snr_db),
                      key=lambda r: r.device)
        return np.array([r.ber for r in rows])


@dataclass(frozen=True)
class CapacityRow:
    snr_db: float
    delta: float
    capacity: float


@dataclass
class CapacityReport:
    scenario: SimScenario
    rows: list[CapacityRow] = field(default_factory=list)


def wilson_interval(errors: int, bits: int, z: float = 1.96) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if bits <= 0:
        return (0.0, 1.0)
    p = errors / bits
    z2 = z * z
    denom = 1.0 + z2 / bits
    center = (p + z2 / (2.0 * bits)) / denom
    half = z * sqrt(p * (1.0 - p) / bits + z2 / (4.0 * bits * bits)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def bpsk_rayleigh_ber_oracle(avg_snr_linear: float) -> float:
    """Closed-form BPSK bit error rate over flat Rayleigh fading."""
    if avg_snr_linear <= 0:
        raise ValueError("average SNR must be positive")
    g = avg_snr_linear
    return 0.5 * (1.0 - sqrt(g / (1.0 + g)))


def complexity_report(config: FrameConfig) -> dict[str, int]:
    """Online detection operation counts: 4ML + 2(L-1) for the SIC detector,
    the 80 x 60 hidden-weight product for the network (independent of M, L)."""
    m = config.modulation_order
    l = config.l
    return {
        "sicd": 4 * m * l + 2 * (l - 1),
        "deepmud": 80 * 60,
    }


def _simulate_chunk(args):
    """Simulate n_frames end to end; returns (errors, bits) per device."""
    rng, snr_db, n_frames, l, n_d, k, detector, model = args
    config = FrameConfig(l=l, n_d=n_d)
    profile = PowerProfile.ladder(snr_db, k)
    bits = rng.integers(0, 2, size=(n_frames, k, n_d))
    symbols = (1.0 - 2.0 * bits).astype(complex)
    frames = build_frames_batch(symbols, config, pilot=PILOT_VALUE)
    channels = draw_channels(rng, profile, k, size=n_frames)
    noise = draw_noise(rng, NoiseConfig(1.0), config.n, size=n_frames)
    received = superimpose_batch(frames, channels, profile, noise)

    if detector == "deepmud":
        bits_hat = model.detect_bits_batch(received)[:, :k, :]
    else:
        if detector == "sic_perfect":
            estimates = channels
        else:  # sic_ls
            amp = np.sqrt(profile.transmit_power)
            estimates = received[:, :k] / (amp * PILOT_VALUE)
        detected = sic_detect_batch(received[:, config.l:], estimates,
                                    profile, config)
        bits_hat = demodulate_bpsk(detected)

    errors = (bits_hat != bits).sum(axis=(0, 2)).astype(np.int64)
    counted = np.full(k, n_frames * n_d, dtype=np.int64)
    return errors, counted


def monte_carlo_ber(scenario: SimScenario, model=None, workers: int = 1) -> BerReport:
    """Per-device BER at every grid SNR, with Wilson confidence intervals.

    The deepmud detector requires ``model`` (a trained detector whose frame
    layout matches the scenario); SIC detectors ignore it.
    """
    if scenario.detector == "deepmud":
        if model is None:
            raise ValueError("deepmud detector needs a trained model")
        if model.frame.l != scenario.frame.l or model.frame.n_d != scenario.frame.n_d:
            raise ValueError("model frame layout does not match the scenario")

    root = np.random.SeedSequence(scenario.seed)
    point_seeds = root.spawn(len(scenario.snr_grid_db))
    report = BerReport(scenario=scenario)
    k = scenario.k_active

    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for snr_db, point_ss in zip(scenario.snr_grid_db, point_seeds):
            errors = np.zeros(k, dtype=np.int64)
            counted = np.zeros(k, dtype=np.int64)
            frames_done = 0
            while True:
                sizes = []
                for _ in range(MC_ROUND_CHUNKS):
                    remaining = scenario.max_frames - frames_done - sum(sizes)
                    if remaining <= 0:
                        break
                    sizes.append(min(MC_CHUNK, remaining))
                if not sizes:
                    break
                children = point_ss.spawn(len(sizes))
                args = [(np.random.default_rng(child), snr_db, size,
                         scenario.frame.l, scenario.frame.n_d, k,
                         scenario.detector, model)
                        for child, size in zip(children, sizes)]
                if pool is not None:
                    results = list(pool.map(_simulate_chunk, args, chunksize=1))
                else:
                    results = [_simulate_chunk(a) for a in args]
                for err, cnt in results:
                    errors += err
                    counted += cnt
                frames_done += sum(sizes)
                if errors.min() >= scenario.target_errors:
                    break
                if frames_done >= scenario.max_frames:
                    break
            for dev in range(k):
                ber = errors[dev] / counted[dev]
                lo, hi = wilson_interval(int(errors[dev]), int(counted[dev]))
                report.rows.append(BerRow(device=dev + 1, snr_db=float(snr_db),
                                          bits=int(counted[dev]),
                                          errors=int(errors[dev]),
                                          ber=float(ber), ci_low=lo, ci_high=hi))
    finally:
        if pool is not None:
            pool.shutdown()
    return report


def ensured_capacity(report: BerReport, config: FrameConfig,
                     delta_override: float | None = None) -> CapacityReport:
    """Normalized ensured capacity C = delta * sum_i log2(M_i) (1 - P_i(e)),
    B = 1 Hz. ``delta_override`` supports the symbol-by-symbol SIC accounting
    where delta = 1 / (K + 1) instead of N_d / N."""
    delta = config.delta if delta_override is None else float(delta_override)
    bits_per_symbol = np.log2(config.modulation_order)
    out = CapacityReport(scenario=report.scenario)
    for snr_db in report.scenario.snr_grid_db:
        bers = report.device_bers(float(snr_db))
        capacity = delta * float(np.sum(bits_per_symbol * (1.0 - bers)))
        out.rows.append(CapacityRow(snr_db=float(snr_db), delta=delta,
                                    capacity=capacity))
    return out


def _fmt(x: float) -> str:
    return "%.12g" % x


def write_ber_csv(report: BerReport, path) -> None:
    lines = ["scenario_id,detector,device,snr_db,bits,errors,ber,ci_low,ci_high"]
    sid = report.scenario.scenario_id
    det = report.scenario.detector
    for r in sorted(report.rows, key=lambda r: (r.snr_db, r.device)):
        lines.append(",".join([sid, det, str(r.device), _fmt(r.snr_db),
                               str(r.bits), str(r.errors), _fmt(r.ber),
                               _fmt(r.ci_low), _fmt(r.ci_high)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_capacity_csv(report: CapacityReport, path) -> None:
    lines = ["scenario_id,detector,snr_db,delta,capacity"]
    sid = report.scenario.scenario_id
    det = report.scenario.detector
    for r in report.rows:
        lines.append(",".join([sid, det, _fmt(r.snr_db), _fmt(r.delta),
                               _fmt(r.capacity)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_plot_description(reports: list[BerReport], path, title: str = "BER vs SNR") -> None:
    """Plot-description sidecar: series data plus axis metadata as JSON."""
    series = []
    for report in reports:
        for device in range(1, report.scenario.k_active + 1):
            rows = sorted((r for r in report.rows if r.device == device),
                          key=lambda r: r.snr_db)
            series.append({
                "name": f"{report.scenario.detector} device {device}",
                "x": [r.snr_db for r in rows],
                "y": [r.ber for r in rows],
                "ci_low": [r.ci_low for r in rows],
                "ci_high": [r.ci_high for r in rows],
            })
    doc = {
        "title": title,
        "x_axis": {"label": "transmit SNR (dB)", "scale": "linear"},
        "y_axis": {"label": "bit error rate", "scale": "log"},
        "series": series,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
