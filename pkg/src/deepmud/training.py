"""Training loop for the sequence detector and the trained-model wrapper.

The inner loop minimizes the half-MSE symbol regression loss with mini-batch
ADAM. The outer loop enforces device fairness: after each round the per-device
bit error rates are measured on a fixed validation scenario, and training
rounds repeat with updated optimizer settings until the worst device's BER
stops improving by more than ``fairness_tolerance`` or ``max_outer_rounds`` is
reached. The round with the smallest worst-device BER wins.

Round r trains (up to max_epoch epochs, continuing from the current weights)
with mini-batch max(mini_batch / 10^r, 100) and learning rate lr * 0.5^(r-1)
for r >= 2. Shrinking the batch raises the ADAM step count per epoch, which is
what actually rescues the weakest devices; the first round always runs the
configured settings unchanged.

Detector inputs are scaled per frame by the frame's RMS amplitude (an AGC
stage) so one model can serve the whole SNR grid; the raw dataset is never
modified.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import Dataset, frame_rms_batch, reform_inputs_batch
from .framing import FrameConfig
from .nn import (
    Network,
    adam_init,
    adam_step,
    backprop,
    forward,
    init_network,
    param_blocks,
)
from .nn.network import DEFAULT_HIDDEN, set_param_blocks

AGC_EPS = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    l: int = 4
    n: int = 16
    snr_grid_db: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    mini_batch: int = 1000
    learning_rate: float = 0.001
    max_epoch: int = 20
    samples_per_snr: int = 100_000
    fairness_tolerance: float = 1e-3
    max_outer_rounds: int = 3
    validation_frames: int = 2000

    def __post_init__(self):
        if self.l < 1 or self.n <= self.l:
            raise ValueError("need l >= 1 and n > l")
        if min(self.mini_batch, self.max_epoch, self.samples_per_snr,
               self.max_outer_rounds, self.validation_frames) < 1:
            raise ValueError("sizes and budgets must be positive")
        if self.learning_rate <= 0 or self.fairness_tolerance < 0:
            raise ValueError("learning rate must be positive, tolerance non-negative")
        grid = tuple(float(s) for s in self.snr_grid_db)
        if len(grid) == 0 or list(grid) != sorted(grid):
            raise ValueError("SNR grid must be non-empty and ascending")

    @property
    def frame(self) -> FrameConfig:
        return FrameConfig(l=self.l, n_d=self.n - self.l)


@dataclass
class TrainedModel:
    """Frozen detector: network weights plus the frame layout they were trained
    for. Per-device validation BER is (l, len(snr_grid_db)) for the selected
    round."""

    network: Network
    frame: FrameConfig
    config: TrainConfig
    validation_ber: np.ndarray | None = None
    history: list[dict] = field(default_factory=list)

    def _normalize(self, inputs: np.ndarray) -> np.ndarray:
        scale = np.maximum(frame_rms_batch(inputs, self.frame), AGC_EPS)
        return inputs / scale[:, None, None]

    def forward_frames(self, received_frames: np.ndarray) -> np.ndarray:
        """(B, n) complex frames -> (B, l, n_d) real symbol estimates."""
        inputs = reform_inputs_batch(np.asarray(received_frames), self.frame)
        return forward(self.network, self._normalize(inputs))

    def detect_bits_batch(self, received_frames: np.ndarray) -> np.ndarray:
        """Hard decisions for every device slot: output >= 0 -> bit 0."""
        return (self.forward_frames(received_frames) < 0).astype(np.int64)


def detect(model: TrainedModel, received_frame: np.ndarray, k: int) -> np.ndarray:
    """Detect one frame. Returns bits for all l device slots, (l, n_d); the
    caller keeps the first k rows. Inactive devices transmit nothing, so their
    pilot slots carry only noise."""
    if not 1 <= k <= model.frame.l:
        raise ValueError(f"active count {k} out of range 1..{model.frame.l}")
    received_frame = np.asarray(received_frame)
    if received_frame.shape != (model.frame.n,):
        raise ValueError(f"frame length {received_frame.shape} != {model.frame.n}")
    return model.detect_bits_batch(received_frame[None])[0]


class Trainer:
    """Stateful trainer; every bit of state needed to resume deterministically
    lives in state_dict()."""

    def __init__(self, dataset: Dataset, config: TrainConfig, seed: int = 0,
                 hidden_dims: tuple[int, int] = DEFAULT_HIDDEN):
        if dataset.frame.l != config.l or dataset.frame.n != config.n:
            raise ValueError("dataset frame layout does not match the config")
        if tuple(dataset.snr_grid_db) != tuple(float(s) for s in config.snr_grid_db):
            raise ValueError("dataset SNR grid does not match the config")
        if dataset.samples_per_snr != config.samples_per_snr:
            raise ValueError("dataset sample count does not match the config")

        self.dataset = dataset
        self.config = config
        self.seed = seed
        self.hidden_dims = tuple(hidden_dims)

        ss = np.random.SeedSequence(seed)
        init_ss, shuffle_ss, val_ss = ss.spawn(3)
        input_dim = 2 * config.l + 2
        self.network = init_network(np.random.default_rng(init_ss), input_dim,
                                    config.l, hidden_dims=self.hidden_dims)
        self.params = param_blocks(self.network)
        self.adam = adam_init(self.params)
        self.shuffle_rng = np.random.default_rng(shuffle_ss)
        self.validation_seed = int(val_ss.generate_state(1)[0])

        self.mini_batch, self.learning_rate = self._round_settings(0)
        self.round_index = 0
        self.epoch_in_round = 0
        self.history: list[dict] = []
        self.diverged = False
        self.prev_round_max_ber: float | None = None
        self.best_max_ber: float | None = None
        self.best_params: dict[str, np.ndarray] | None = None
        self.best_validation: np.ndarray | None = None
        self._last_good = {k: v.copy() for k, v in self.params.items()}

        # AGC scales are fixed by the dataset, so compute them once.
        self._scales = np.maximum(frame_rms_batch(dataset.inputs, dataset.frame),
                                  AGC_EPS)

    # -- inner loop ---------------------------------------------------------

    def _round_settings(self, round_index: int) -> tuple[int, float]:
        """(mini-batch, learning rate) for a fairness round."""
        batch = max(self.config.mini_batch // (10 ** round_index), 100)
        batch = min(batch, self.config.mini_batch)
        lr = self.config.learning_rate * (0.5 ** max(0, round_index - 1))
        return batch, lr

    def _run_epoch(self) -> float:
        data = self.dataset
        num = data.num_samples
        perm = self.shuffle_rng.permutation(num)
        total = 0.0
        seen = 0
        for start in range(0, num, self.mini_batch):
            idx = perm[start:start + self.mini_batch]
            x = data.inputs[idx] / self._scales[idx][:, None, None]
            target = data.targets[idx]
            loss, grads = backprop(self.network, x, target)
            if not np.isfinite(loss):
                raise FloatingPointError(f"loss diverged to {loss}")
            adam_step(self.params, grads, self.adam, self.learning_rate)
            total += loss * len(idx)
            seen += len(idx)
        return total / seen

    def _snapshot_model(self) -> TrainedModel:
        return TrainedModel(network=copy.deepcopy(self.network),
                            frame=self.dataset.frame, config=self.config)

    def _validate(self, workers: int = 1) -> np.ndarray:
        """Per-device BER table (l, n_snr) on a fixed seeded scenario; the same
        frames are replayed every round so rounds compare on equal footing."""
        from .evaluation import SimScenario, monte_carlo_ber

        scenario = SimScenario(
            frame=self.dataset.frame,
            snr_grid_db=tuple(float(s) for s in self.config.snr_grid_db),
            detector="deepmud",
            k_active=self.config.l,
            seed=self.validation_seed,
            max_frames=self.config.validation_frames,
            target_errors=np.iinfo(np.int64).max,  # fixed budget, no early stop
        )
        report = monte_carlo_ber(scenario, model=self._snapshot_model(),
                                 workers=workers)
        table = np.zeros((self.config.l, len(scenario.snr_grid_db)))
        for j, snr in enumerate(scenario.snr_grid_db):
            table[:, j] = report.device_bers(snr)
        return table

    # -- outer loop ---------------------------------------------------------

    def run(self, workers: int = 1, epoch_callback=None) -> TrainedModel:
        while True:
            while self.epoch_in_round < self.config.max_epoch and not self.diverged:
                try:
                    loss = self._run_epoch()
                except FloatingPointError as exc:
                    set_param_blocks(self.network, {k: v.copy() for k, v
                                                    in self._last_good.items()})
                    self.params = param_blocks(self.network)
                    self.diverged = True
                    self.history.append({"event": "diverged",
                                         "round": self.round_index,
                                         "epoch": self.epoch_in_round,
                                         "detail": str(exc)})
                    break
                self._last_good = {k: v.copy() for k, v in self.params.items()}
                self.history.append({"event": "epoch", "round": self.round_index,
                                     "epoch": self.epoch_in_round, "loss": loss,
                                     "learning_rate": self.learning_rate,
                                     "mini_batch": self.mini_batch})
                self.epoch_in_round += 1
                if epoch_callback is not None:
                    epoch_callback(self)

            validation = self._validate(workers=workers)
            # Fairness metric: each device's BER averaged over the grid, then
            # the worst device (min-max criterion).
            max_ber = float(validation.mean(axis=1).max())
            self.history.append({"event": "round", "round": self.round_index,
                                 "max_ber": max_ber,
                                 "validation_ber": validation.tolist()})
            if self.best_max_ber is None or max_ber < self.best_max_ber:
                self.best_max_ber = max_ber
                self.best_params = {k: v.copy() for k, v in self.params.items()}
                self.best_validation = validation

            improvement = (None if self.prev_round_max_ber is None
                           else self.prev_round_max_ber - max_ber)
            self.prev_round_max_ber = max_ber
            done = (self.round_index + 1 >= self.config.max_outer_rounds
                    or self.diverged
                    or (improvement is not None
                        and improvement <= self.config.fairness_tolerance))
            if done:
                break
            self.round_index += 1
            self.epoch_in_round = 0
            self.mini_batch, self.learning_rate = self._round_settings(self.round_index)
            self.history.append({"event": "settings_update",
                                 "round": self.round_index,
                                 "learning_rate": self.learning_rate,
                                 "mini_batch": self.mini_batch})

        set_param_blocks(self.network, {k: v.copy() for k, v
                                        in self.best_params.items()})
        self.params = param_blocks(self.network)
        return TrainedModel(network=self.network, frame=self.dataset.frame,
                            config=self.config,
                            validation_ber=self.best_validation,
                            history=list(self.history))

    # -- persistence --------------------------------------------------------

    def state_dict(self) -> tuple[dict, dict[str, np.ndarray]]:
        """(JSON-safe metadata, array blocks) capturing the full trainer state."""
        meta = {
            "seed": self.seed,
            "hidden_dims": list(self.hidden_dims),
            "config": asdict(self.config),
            "learning_rate": self.learning_rate,
            "mini_batch": self.mini_batch,
            "round_index": self.round_index,
            "epoch_in_round": self.epoch_in_round,
            "diverged": self.diverged,
            "prev_round_max_ber": self.prev_round_max_ber,
            "best_max_ber": self.best_max_ber,
            "adam_step_count": self.adam.step_count,
            "rng_state": self.shuffle_rng.bit_generator.state,
            "validation_seed": self.validation_seed,
            "history": self.history,
            "has_best": self.best_params is not None,
        }
        blocks: dict[str, np.ndarray] = {}
        for name, arr in self.params.items():
            blocks[f"param.{name}"] = arr
            blocks[f"adam_m.{name}"] = self.adam.first_moment[name]
            blocks[f"adam_v.{name}"] = self.adam.second_moment[name]
            blocks[f"last_good.{name}"] = self._last_good[name]
        if self.best_params is not None:
            for name, arr in self.best_params.items():
                blocks[f"best.{name}"] = arr
            blocks["best_validation"] = self.best_validation
        return meta, blocks

    def load_state(self, meta: dict, blocks: dict[str, np.ndarray]) -> None:
        canon = lambda obj: json.loads(json.dumps(obj))  # tuples -> lists, etc.
        if canon(meta["config"]) != canon(asdict(self.config)):
            raise ValueError("checkpoint was produced with a different train config")
        if tuple(meta["hidden_dims"]) != self.hidden_dims:
            raise ValueError("checkpoint architecture mismatch")
        self.learning_rate = meta["learning_rate"]
        self.mini_batch = meta["mini_batch"]
        self.round_index = meta["round_index"]
        self.epoch_in_round = meta["epoch_in_round"]
        self.diverged = meta["diverged"]
        self.prev_round_max_ber = meta["prev_round_max_ber"]
        self.best_max_ber = meta["best_max_ber"]
        self.validation_seed = meta["validation_seed"]
        self.history = list(meta["history"])
        state = dict(meta["rng_state"])
        state["state"] = {k: int(v) for k, v in state["state"].items()}
        self.shuffle_rng.bit_generator.state = state
        self.adam.step_count = meta["adam_step_count"]
        for name in self.params:
            self.params[name][...] = blocks[f"param.{name}"]
            self.adam.first_moment[name][...] = blocks[f"adam_m.{name}"]
            self.adam.second_moment[name][...] = blocks[f"adam_v.{name}"]
            self._last_good[name] = blocks[f"last_good.{name}"].copy()
        if meta["has_best"]:
            self.best_params = {name: blocks[f"best.{name}"].copy()
                                for name in self.params}
            self.best_validation = blocks["best_validation"].copy()


def train(dataset: Dataset, config: TrainConfig, seed: int = 0,
          workers: int = 1,
          hidden_dims: tuple[int, int] = DEFAULT_HIDDEN) -> TrainedModel:
    """Full training run: inner descent plus the fairness outer loop."""
    return Trainer(dataset, config, seed=seed, hidden_dims=hidden_dims).run(workers=workers)
