"""Run configuration: flat key=value files with section headers.

Keys use the training-table names verbatim (snr_grid, mini_batch,
learning_rate, max_epoch, samples_per_snr, L, N). Any key can be overridden
from the environment with DEEPMUD_<SECTION>_<KEY>, e.g.
DEEPMUD_TRAIN_LEARNING_RATE=0.01. Validation happens before any work starts
and reports the offending file line.

Sections and keys (all optional, defaults in parentheses):

    [frame]   L (4), N (16)
    [train]   snr_grid (0,5,10,15,20,25,30), mini_batch (1000),
              learning_rate (0.001), max_epoch (20), samples_per_snr (100000),
              fairness_tolerance (0.001), max_outer_rounds (3),
              validation_frames (2000)
    [eval]    snr_grid (train grid), detector (sic_perfect), k_active (L),
              frames_per_point (200000), min_bit_errors (100)
    [paths]   dataset, checkpoint, out_dir (.)
    [run]     seed (0), workers (1)
"""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass

from .evaluation import DETECTORS
from .framing import FrameConfig
from .training import TrainConfig

ENV_PREFIX = "DEEPMUD_"

# --desk-scale preset: shrink the sample and frame budgets for CI smoke runs.
DESK_SCALE = {
    "samples_per_snr": 1000,
    "frames_per_point": 20_000,
    "validation_frames": 500,
    "min_bit_errors": 50,
}


class ConfigError(Exception):
    """Invalid configuration; message carries file/line context."""


@dataclass(frozen=True)
class RunConfig:
    frame: FrameConfig
    train: TrainConfig
    eval_snr_grid: tuple[float, ...]
    detector: str
    k_active: int
    frames_per_point: int
    min_bit_errors: int
    dataset_path: str | None
    checkpoint_path: str | None
    out_dir: str
    seed: int
    workers: int


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Map (section, key) to the 1-based line the key appears on."""
    lines = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        m = re.match(r"\[(.+)\]$", line)
        if m:
            section = m.group(1).strip().lower()
            continue
        m = re.match(r"([^=:\s]+)\s*[=:]", line)
        if m:
            lines[(section, m.group(1).strip().lower())] = lineno
    return lines


class _Source:
    """Parsed file plus environment overrides, with line-aware error messages."""

    def __init__(self, path, env):
        self.path = path
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config: {exc}") from exc
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        self.parser = parser
        self.lines = _key_lines(text)
        self.env = env

    def _where(self, section: str, key: str) -> str:
        line = self.lines.get((section.lower(), key.lower()))
        at = f"{self.path}:{line}" if line else self.path
        return f"{at}: [{section}] {key}"

    def raw(self, section: str, key: str, default=None):
        env_key = f"{ENV_PREFIX}{section.upper()}_{key.upper()}"
        if env_key in self.env:
            return self.env[env_key]
        if self.parser.has_option(section, key):
            return self.parser.get(section, key)
        return default

    def get(self, section: str, key: str, convert, default=None):
        value = self.raw(section, key)
        if value is None:
            return default
        try:
            return convert(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self._where(section, key)}: {exc}") from exc


def _parse_int(value: str) -> int:
    return int(str(value).strip())


def _parse_float(value: str) -> float:
    return float(str(value).strip())


def _parse_grid(value: str) -> tuple[float, ...]:
    parts = [p for p in re.split(r"[,\s]+", str(value).strip()) if p]
    if not parts:
        raise ValueError("empty SNR grid")
    return tuple(float(p) for p in parts)


def load_run_config(path, env=None, desk_scale: bool = False) -> RunConfig:
    """Parse and fully validate a run configuration file."""
    env = os.environ if env is None else env
    src = _Source(path, env)

    l = src.get("frame", "L", _parse_int, 4)
    n = src.get("frame", "N", _parse_int, 16)

    desk = DESK_SCALE if desk_scale else {}
    train_kwargs = dict(
        l=l,
        n=n,
        snr_grid_db=src.get("train", "snr_grid", _parse_grid,
                            (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)),
        mini_batch=src.get("train", "mini_batch", _parse_int, 1000),
        learning_rate=src.get("train", "learning_rate", _parse_float, 0.001),
        max_epoch=src.get("train", "max_epoch", _parse_int, 20),
        samples_per_snr=src.get("train", "samples_per_snr", _parse_int, 100_000),
        fairness_tolerance=src.get("train", "fairness_tolerance", _parse_float, 0.001),
        max_outer_rounds=src.get("train", "max_outer_rounds", _parse_int, 3),
        validation_frames=src.get("train", "validation_frames", _parse_int, 2000),
    )
    if desk_scale:
        train_kwargs["samples_per_snr"] = min(train_kwargs["samples_per_snr"],
                                              desk["samples_per_snr"])
        train_kwargs["validation_frames"] = min(train_kwargs["validation_frames"],
                                                desk["validation_frames"])
    try:
        train = TrainConfig(**train_kwargs)
        frame = train.frame
    except ValueError as exc:
        raise ConfigError(f"{path}: invalid frame/train settings: {exc}") from exc

    detector = src.get("eval", "detector", str, "sic_perfect").strip()
    if detector not in DETECTORS:
        raise ConfigError(f"{src._where('eval', 'detector')}: unknown detector "
                          f"{detector!r}, expected one of {DETECTORS}")
    eval_grid = src.get("eval", "snr_grid", _parse_grid, train.snr_grid_db)
    k_active = src.get("eval", "k_active", _parse_int, l)
    frames_per_point = src.get("eval", "frames_per_point", _parse_int, 200_000)
    min_bit_errors = src.get("eval", "min_bit_errors", _parse_int, 100)
    if desk_scale:
        frames_per_point = min(frames_per_point, desk["frames_per_point"])
        min_bit_errors = min(min_bit_errors, desk["min_bit_errors"])
    if not 1 <= k_active <= l:
        raise ConfigError(f"{src._where('eval', 'k_active')}: "
                          f"k_active must be in 1..{l}, got {k_active}")
    if len(eval_grid) == 0:
        raise ConfigError(f"{src._where('eval', 'snr_grid')}: empty SNR grid")
    if frames_per_point < 1:
        raise ConfigError(f"{src._where('eval', 'frames_per_point')}: must be >= 1")

    seed = src.get("run", "seed", _parse_int, 0)
    workers = src.get("run", "workers", _parse_int, os.cpu_count() or 1)
    if workers < 1:
        raise ConfigError(f"{src._where('run', 'workers')}: must be >= 1")

    return RunConfig(
        frame=frame,
        train=train,
        eval_snr_grid=eval_grid,
        detector=detector,
        k_active=k_active,
        frames_per_point=frames_per_point,
        min_bit_errors=min_bit_errors,
        dataset_path=src.get("paths", "dataset", str, None),
        checkpoint_path=src.get("paths", "checkpoint", str, None),
        out_dir=src.get("paths", "out_dir", str, "."),
        seed=seed,
        workers=workers,
    )
