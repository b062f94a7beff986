"""Command-line entry point.

Subcommands: simulate, make-dataset, train, eval, sweep, reproduce. One JSON
config file drives everything; --set path=value flags override config keys.
Exit codes: 2 configuration error, 3 simulation fault, 4 data error,
5 integrity failure.

The SMGID_OUTPUT_ROOT environment variable, when set, prefixes every
relative output path.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import RunConfig, apply_overrides
from .dataset import (
    file_sha256,
    fit_normalizer,
    load_dataset,
    make_windows,
    save_dataset,
    sidecar_path,
    NormalizationStats,
)
from .errors import (
    ConfigError,
    ConstantTruth,
    IntegrityError,
    InvalidRange,
    LengthMismatch,
    NoEquilibrium,
    ShapeMismatch,
    SmgidError,
    TrajectoryTooShort,
    VoltageFloorViolation,
    ZeroDirection,
)
from .evaluation import evaluate_model, write_prediction_series
from .experiments import history_length_sweep, run_pipeline, simulate_trajectory
from .simulate import Trajectory
from .tcn import TcnModel, load_checkpoint, save_checkpoint
from .training import train as run_training

EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_DATA = 4
EXIT_INTEGRITY = 5

_EXIT_CODES = (
    (IntegrityError, EXIT_INTEGRITY),
    ((VoltageFloorViolation, NoEquilibrium), EXIT_SIMULATION),
    ((TrajectoryTooShort, LengthMismatch, ShapeMismatch, ConstantTruth),
     EXIT_DATA),
    ((ConfigError, InvalidRange, ZeroDirection), EXIT_CONFIG),
)


def _resolve_out(path: str) -> str:
    root = os.environ.get("SMGID_OUTPUT_ROOT")
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def _load_config(args) -> RunConfig:
    overrides = args.set or []
    if args.config is not None:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_dict(apply_overrides({}, overrides))


def _write_config_copy(cfg: RunConfig, directory: str) -> None:
    os.makedirs(directory, exist_ok=True)
    cfg.write(os.path.join(directory, "config.used.json"))


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    which = args.which
    dist = cfg.train_disturbance if which == "train" else cfg.test_disturbance
    duration = args.duration
    if duration is None:
        duration = (cfg.simulation.train_duration if which == "train"
                    else cfg.simulation.test_duration)
    schedule = dist.build(duration)
    traj = simulate_trajectory(cfg, schedule, duration)
    out = _resolve_out(args.out)
    out_dir = os.path.dirname(out) or "."
    os.makedirs(out_dir, exist_ok=True)
    traj.to_csv(out)
    schedule.to_csv(out + ".schedule.csv")
    _write_config_copy(cfg, out_dir)
    print(f"wrote {len(traj)} records at dt={traj.dt:g} s to {out}")
    return 0


def _cmd_make_dataset(args) -> int:
    traj = Trajectory.from_csv(args.trajectory)
    if args.stats_from is not None:
        import json

        with open(args.stats_from, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        if "stats" not in meta:
            raise ConfigError(f"{args.stats_from} has no stats block")
        stats = NormalizationStats.from_dict(meta["stats"])
    else:
        stats = fit_normalizer(traj)
    ds = make_windows(traj, args.history_length, args.stride, stats)
    out = _resolve_out(args.out)
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    save_dataset(ds, out, source_path=args.trajectory,
                 source_sha256=file_sha256(args.trajectory))
    print(f"wrote {len(ds)} windows (L={ds.history_length}, "
          f"stride={ds.stride}) to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    ds = load_dataset(args.dataset)
    model_cfg = cfg.model_for(ds.history_length)
    if ds.history_length > model_cfg.receptive_field:
        raise ConfigError(
            f"dataset history length {ds.history_length} exceeds model "
            f"receptive field {model_cfg.receptive_field}")
    out_dir = _resolve_out(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    _write_config_copy(cfg, out_dir)
    model = TcnModel(model_cfg, seed=cfg.seed)
    _, history = run_training(
        model, ds, cfg.training, checkpoint_dir=out_dir,
        loss_log_path=os.path.join(out_dir, "loss_log.csv"),
        progress=lambda rec: print(
            f"epoch {rec['epoch']}: train_mse={rec['train_mse']:.3e}"
            + (f" val_mse={rec['val_mse']:.3e}"
               if rec["val_mse"] is not None else "")))
    print(f"checkpoint written to {os.path.join(out_dir, 'final.bin')}")
    return 0


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    ds = load_dataset(args.dataset)
    if ds.history_length > model.config.receptive_field:
        raise ConfigError(
            f"dataset history length {ds.history_length} exceeds model "
            f"receptive field {model.config.receptive_field}")
    out_dir = _resolve_out(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    metrics, series = evaluate_model(model, ds, return_series=True)
    metrics.to_csv(os.path.join(out_dir, "metrics.csv"))
    with open(os.path.join(out_dir, "metrics.txt"), "w", encoding="utf-8") as fh:
        fh.write(metrics.format_table() + "\n")
    write_prediction_series(os.path.join(out_dir, "predictions.csv"), *series)
    print(metrics.format_table())
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    lengths = [int(v) for v in args.lengths.split(",") if v]
    if not lengths:
        raise ConfigError("at least one history length is required")
    out_dir = _resolve_out(args.out_dir)
    report = history_length_sweep(cfg, lengths, out_dir=out_dir,
                                  progress=print)
    print(report.format_table())
    return 0


def _cmd_reproduce(args) -> int:
    cfg = _load_config(args)
    out_dir = _resolve_out(args.out_dir or cfg.output_dir)
    result = run_pipeline(cfg, out_dir=out_dir, progress=print)
    print(result.metrics.format_table())
    print(f"artifacts in {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smgid",
        description="Simulate a reduced-order MVDC shipboard microgrid and "
                    "train a temporal convolutional network on its dynamics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", help="JSON run configuration file")
        p.add_argument("--set", action="append", metavar="PATH=VALUE",
                       help="override a config key, e.g. training.epochs=8")

    p = sub.add_parser("simulate", help="integrate the microgrid and write a "
                                        "trajectory CSV")
    add_config_args(p)
    p.add_argument("--out", required=True, help="output trajectory CSV path")
    p.add_argument("--which", choices=["train", "test"], default="train",
                   help="which configured disturbance to apply")
    p.add_argument("--duration", type=float, help="override duration in seconds")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("make-dataset", help="window a trajectory CSV into a "
                                            "dataset container")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--history-length", type=int, required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--stats-from",
                   help="sidecar JSON whose normalization stats to reuse")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_dataset)

    p = sub.add_parser("train", help="train a model on a dataset container")
    add_config_args(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="history-length sweep")
    add_config_args(p)
    p.add_argument("--lengths", required=True,
                   help="comma-separated history lengths, e.g. 1000,3000")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("reproduce", help="full pipeline: simulate, window, "
                                         "train, evaluate, report")
    add_config_args(p)
    p.add_argument("--out-dir", help="defaults to output_dir from the config")
    p.set_defaults(func=_cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SmgidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for types, code in _EXIT_CODES:
            if isinstance(exc, types):
                return code
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
