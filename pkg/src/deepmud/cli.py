"""Command-line entry point.

Verbs: gen-dataset, train, eval, compare, capacity, gradcheck.
Common flags: --config, --seed, --workers, --desk-scale, --out-dir.
Exit codes: 0 success, 1 runtime failure, 2 config/validation failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from .checkpoint import load_checkpoint, resume_trainer, save_checkpoint
from .config import ConfigError, RunConfig, load_run_config
from .dataset import (
    dataset_config_hash,
    dataset_file_hash,
    generate_dataset,
    load_dataset,
    save_dataset,
)
from .evaluation import (
    SimScenario,
    ensured_capacity,
    monte_carlo_ber,
    write_ber_csv,
    write_capacity_csv,
    write_plot_description,
)
from .iocontainer import ContainerError
from .nn import gradient_check, init_network
from .training import Trainer

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


class CliError(Exception):
    """Validation failure surfaced as exit code 2."""


def _load_config(args) -> RunConfig:
    if not args.config:
        raise CliError("--config is required for this command")
    cfg = load_run_config(args.config, desk_scale=args.desk_scale)
    if args.seed is not None:
        cfg = _replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = _replace(cfg, workers=args.workers)
    if args.out_dir is not None:
        cfg = _replace(cfg, out_dir=args.out_dir)
    return cfg


def _replace(cfg: RunConfig, **kw) -> RunConfig:
    from dataclasses import replace
    return replace(cfg, **kw)


def _require_parent(path, what: str) -> None:
    if path is None:
        raise CliError(f"no {what} path configured (set [paths] or pass a flag)")
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise CliError(f"{what} directory does not exist: {parent}")


def _log_line(cfg: RunConfig, name: str, message: str) -> None:
    os.makedirs(cfg.out_dir, exist_ok=True)
    stamp = time.strftime("%Y-%m-%d %H:%M:%S")
    with open(os.path.join(cfg.out_dir, name), "a") as fh:
        fh.write(f"{stamp} {message}\n")


def cmd_gen_dataset(args) -> int:
    cfg = _load_config(args)
    path = args.out or cfg.dataset_path
    _require_parent(path, "dataset")
    dataset = generate_dataset(cfg.seed, cfg.train, workers=cfg.workers)
    save_dataset(dataset, path)
    print(f"wrote {dataset.num_samples} samples "
          f"({cfg.train.samples_per_snr} x {len(cfg.train.snr_grid_db)} SNRs) to {path}")
    print(f"config hash {dataset_file_hash(path)}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    dataset_path = args.dataset or cfg.dataset_path
    checkpoint_path = args.checkpoint or cfg.checkpoint_path
    if dataset_path is None or not os.path.exists(dataset_path):
        raise CliError(f"dataset file not found: {dataset_path}")
    _require_parent(checkpoint_path, "checkpoint")

    expected = dataset_config_hash(cfg.train.l, cfg.train.n, cfg.train.snr_grid_db,
                                   cfg.train.samples_per_snr, cfg.seed)
    actual = dataset_file_hash(dataset_path)
    if actual != expected:
        raise CliError(f"dataset header does not match the config "
                       f"(file hash {actual[:12]}, expected {expected[:12]}); "
                       f"refusing to train")
    dataset = load_dataset(dataset_path)

    if args.resume:
        if not os.path.exists(checkpoint_path):
            raise CliError(f"--resume given but checkpoint not found: {checkpoint_path}")
        trainer = resume_trainer(checkpoint_path, dataset)
        print(f"resumed from {checkpoint_path} at round {trainer.round_index} "
              f"epoch {trainer.epoch_in_round}")
    else:
        trainer = Trainer(dataset, cfg.train, seed=cfg.seed)

    def checkpoint_epoch(tr: Trainer) -> None:
        save_checkpoint(checkpoint_path, tr._snapshot_model(), trainer=tr,
                        dataset_hash=actual)
        last = tr.history[-1]
        _log_line(cfg, "train.log",
                  f"round {last['round']} epoch {last['epoch']} "
                  f"loss {last['loss']:.6f} lr {last['learning_rate']:g}")

    model = trainer.run(workers=cfg.workers, epoch_callback=checkpoint_epoch)
    save_checkpoint(checkpoint_path, model, trainer=trainer, dataset_hash=actual)
    best_so_far = float("inf")
    for event in model.history:
        if event.get("event") == "round":
            best_so_far = min(best_so_far, event["max_ber"])
            _log_line(cfg, "train.log",
                      f"round {event['round']} max_ber {event['max_ber']:.6f} "
                      f"best_max_ber {best_so_far:.6f} per-device "
                      f"{np.asarray(event['validation_ber']).mean(axis=1).round(5).tolist()}")
    print(f"wrote checkpoint {checkpoint_path} "
          f"(best worst-device BER {trainer.best_max_ber:.5f})")
    return EXIT_OK


def _eval_scenario(cfg: RunConfig, detector: str) -> SimScenario:
    return SimScenario(
        frame=cfg.frame,
        snr_grid_db=cfg.eval_snr_grid,
        detector=detector,
        k_active=cfg.k_active,
        seed=cfg.seed,
        max_frames=cfg.frames_per_point,
        target_errors=cfg.min_bit_errors,
    )


def _load_model_for(cfg: RunConfig, args):
    path = args.checkpoint or cfg.checkpoint_path
    if path is None or not os.path.exists(path):
        raise CliError(f"checkpoint file not found: {path}")
    model, _, _ = load_checkpoint(path)
    if model.frame.l != cfg.frame.l or model.frame.n_d != cfg.frame.n_d:
        raise CliError(f"checkpoint frame (L={model.frame.l}, N={model.frame.n})"
                       f" does not match config (L={cfg.frame.l}, N={cfg.frame.n})")
    return model


def _run_eval(cfg: RunConfig, detector: str, model) -> tuple:
    scenario = _eval_scenario(cfg, detector)
    report = monte_carlo_ber(scenario, model=model, workers=cfg.workers)
    capacity = ensured_capacity(report, cfg.frame)
    return report, capacity


def _emit_reports(cfg: RunConfig, tagged_reports) -> list[str]:
    os.makedirs(cfg.out_dir, exist_ok=True)
    written = []
    for tag, (report, capacity) in tagged_reports.items():
        ber_path = os.path.join(cfg.out_dir, f"ber_{tag}.csv")
        cap_path = os.path.join(cfg.out_dir, f"capacity_{tag}.csv")
        write_ber_csv(report, ber_path)
        write_capacity_csv(capacity, cap_path)
        written += [ber_path, cap_path]
    plot_path = os.path.join(cfg.out_dir, "ber_plot.json")
    write_plot_description([rep for rep, _ in tagged_reports.values()], plot_path)
    written.append(plot_path)
    return written


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    detector = args.detector or cfg.detector
    if detector not in ("sic_perfect", "sic_ls", "deepmud"):
        raise CliError(f"unknown detector {detector!r}")
    model = _load_model_for(cfg, args) if detector == "deepmud" else None
    report, capacity = _run_eval(cfg, detector, model)
    for path in _emit_reports(cfg, {detector: (report, capacity)}):
        print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    model = _load_model_for(cfg, args)
    tagged = {}
    for detector in ("deepmud", "sic_perfect"):
        tagged[detector] = _run_eval(cfg, detector,
                                     model if detector == "deepmud" else None)
    for path in _emit_reports(cfg, tagged):
        print(f"wrote {path}")
    dm = tagged["deepmud"][0]
    sic = tagged["sic_perfect"][0]
    for snr in cfg.eval_snr_grid:
        print(f"snr {snr:g} dB: worst-device BER deepmud {dm.max_ber(snr):.4g} "
              f"vs sic_perfect {sic.max_ber(snr):.4g}")
    return EXIT_OK


def cmd_capacity(args) -> int:
    cfg = _load_config(args)
    if not args.ber_csv or not os.path.exists(args.ber_csv):
        raise CliError(f"BER CSV not found: {args.ber_csv}")
    out_path = args.out or os.path.join(cfg.out_dir, "capacity_from_csv.csv")
    _require_parent(out_path, "capacity output")

    with open(args.ber_csv) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise CliError(f"{args.ber_csv}: no data rows")
    delta = args.delta if args.delta is not None else cfg.frame.delta
    bits_per_symbol = float(np.log2(cfg.frame.modulation_order))
    by_snr: dict[float, list[float]] = {}
    for row in rows:
        by_snr.setdefault(float(row["snr_db"]), []).append(float(row["ber"]))
    lines = ["snr_db,delta,capacity"]
    for snr in sorted(by_snr):
        cap = delta * sum(bits_per_symbol * (1.0 - b) for b in by_snr[snr])
        lines.append(f"{snr:.12g},{delta:.12g},{cap:.12g}")
    with open(out_path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    net = init_network(rng, input_dim=6, output_dim=2, hidden_dims=(3, 2))
    x = rng.standard_normal((3, 6, 5))
    target = rng.standard_normal((3, 2, 5))
    err = gradient_check(net, (x, target), epsilon=1e-5)
    print(f"max relative gradient error: {err:.3e}")
    if err >= 1e-4:
        print("FAIL: analytic gradients disagree with finite differences")
        return EXIT_RUNTIME
    print("PASS")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepmud",
        description="Grant-free NOMA link simulator and multi-user detector toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run configuration file")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--workers", type=int, help="override [run] workers")
        p.add_argument("--desk-scale", action="store_true",
                       help="shrink sample/frame budgets for smoke runs")
        p.add_argument("--out-dir", help="override [paths] out_dir")

    p = sub.add_parser("gen-dataset", help="generate a training dataset file")
    common(p)
    p.add_argument("--out", help="dataset output path (overrides [paths] dataset)")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", help="train the detector on a dataset")
    common(p)
    p.add_argument("--dataset", help="dataset path (overrides [paths] dataset)")
    p.add_argument("--checkpoint", help="checkpoint path (overrides [paths] checkpoint)")
    p.add_argument("--resume", action="store_true",
                   help="continue from the checkpoint's trainer state")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Monte Carlo BER/capacity for one detector")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint path (needed for deepmud)")
    p.add_argument("--detector", choices=("sic_perfect", "sic_ls", "deepmud"),
                   help="override [eval] detector")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="deepmud vs sic_perfect on one scenario")
    common(p)
    p.add_argument("--checkpoint", help="checkpoint path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("capacity", help="ensured capacity from a BER CSV")
    common(p)
    p.add_argument("--ber-csv", required=True, help="input BER CSV")
    p.add_argument("--delta", type=float,
                   help="override data-to-frame ratio (e.g. 1/(K+1) for SICD)")
    p.add_argument("--out", help="capacity CSV output path")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, ContainerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, FloatingPointError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
