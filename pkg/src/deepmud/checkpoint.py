"""Model checkpoints: parameter blocks, optimizer/trainer state and provenance.

Checkpoints use the shared little-endian container. The header carries the
frame layout, architecture, training config, history and a config hash so a
checkpoint can never be silently loaded against the wrong configuration.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict

import numpy as np

from .framing import FrameConfig
from .iocontainer import read_container, write_container
from .nn import init_network, param_blocks
from .nn.network import set_param_blocks
from .training import TrainConfig, TrainedModel, Trainer


def checkpoint_config_hash(frame: FrameConfig, hidden_dims, config: TrainConfig) -> str:
    payload = {
        "frame": {"l": frame.l, "n_d": frame.n_d},
        "hidden_dims": list(hidden_dims),
        "train_config": json.loads(json.dumps(asdict(config))),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def save_checkpoint(path, model: TrainedModel, trainer: Trainer | None = None,
                    dataset_hash: str | None = None) -> None:
    hidden = model.network.hidden_dims
    meta = {
        "frame": {"l": model.frame.l, "n_d": model.frame.n_d},
        "hidden_dims": list(hidden),
        "train_config": asdict(model.config),
        "history": model.history,
        "dataset_hash": dataset_hash,
        "config_hash": checkpoint_config_hash(model.frame, hidden, model.config),
        "trainer": None,
    }
    blocks = {f"model.{name}": arr for name, arr in param_blocks(model.network).items()}
    if model.validation_ber is not None:
        blocks["model.validation_ber"] = model.validation_ber
    if trainer is not None:
        t_meta, t_blocks = trainer.state_dict()
        meta["trainer"] = t_meta
        blocks.update({f"trainer.{k}": v for k, v in t_blocks.items()})
    write_container(path, "checkpoint", meta, blocks)


def load_checkpoint(path) -> tuple[TrainedModel, dict | None, dict[str, np.ndarray]]:
    """Returns (model, trainer metadata or None, raw trainer blocks)."""
    meta, blocks = read_container(path, expected_kind="checkpoint")
    cfg = dict(meta["train_config"])
    cfg["snr_grid_db"] = tuple(cfg["snr_grid_db"])
    config = TrainConfig(**cfg)
    frame = FrameConfig(l=int(meta["frame"]["l"]), n_d=int(meta["frame"]["n_d"]))
    hidden = tuple(meta["hidden_dims"])

    expected = checkpoint_config_hash(frame, hidden, config)
    if meta.get("config_hash") != expected:
        raise ValueError(f"{path}: config hash mismatch, refusing to load")

    network = init_network(np.random.default_rng(0), 2 * frame.l + 2, frame.l,
                           hidden_dims=hidden)
    set_param_blocks(network, {name: blocks[f"model.{name}"]
                               for name in param_blocks(network)})
    model = TrainedModel(
        network=network,
        frame=frame,
        config=config,
        validation_ber=blocks.get("model.validation_ber"),
        history=list(meta.get("history", [])),
    )
    trainer_blocks = {k[len("trainer."):]: v for k, v in blocks.items()
                      if k.startswith("trainer.")}
    return model, meta.get("trainer"), trainer_blocks


def resume_trainer(path, dataset) -> Trainer:
    """Rebuild a Trainer mid-run; subsequent steps replay exactly."""
    model, trainer_meta, trainer_blocks = load_checkpoint(path)
    if trainer_meta is None:
        raise ValueError(f"{path}: checkpoint has no trainer state to resume from")
    trainer = Trainer(dataset, model.config, seed=trainer_meta["seed"],
                      hidden_dims=tuple(trainer_meta["hidden_dims"]))
    trainer.load_state(trainer_meta, trainer_blocks)
    return trainer
