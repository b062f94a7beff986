"""Experiment orchestration: the end-to-end pipeline, the history-length
sweep, and the generalization study on extreme-amplitude training data.

Every run is fully determined by its RunConfig; seeds for each trained model
are recorded in the emitted reports so any cell can be re-run exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import os
from dataclasses import dataclass

from .config import DisturbanceSettings, RunConfig
from .dataset import (
    WindowedDataset,
    file_sha256,
    fit_normalizer,
    make_windows,
    save_dataset,
)
from .evaluation import ChannelMetrics, evaluate_model, write_prediction_series
from .microgrid import ExogenousInput
from .pulses import PulseSchedule, schedule_input_fn
from .simulate import Trajectory, downsample, integrate, steady_state
from .tcn import TcnModel, save_checkpoint
from .training import train


def simulate_trajectory(cfg: RunConfig, schedule: PulseSchedule,
                        duration: float) -> Trajectory:
    """Integrate from the zero-pulse equilibrium and downsample to the
    recording rate."""
    params = cfg.microgrid
    x0 = steady_state(params, ExogenousInput(p_ppl=0.0, p_cpl=params.p_cpl))
    traj = integrate(params, x0, schedule_input_fn(schedule, params.p_cpl),
                     cfg.simulation.dt, duration)
    return downsample(traj, cfg.simulation.record_every)


def build_datasets(cfg: RunConfig, train_traj: Trajectory,
                   test_traj: Trajectory, history_length: int | None = None):
    """Window both trajectories with statistics fitted on the training one."""
    length = history_length or cfg.dataset.history_length
    stats = fit_normalizer(train_traj)
    train_ds = make_windows(train_traj, length, cfg.dataset.train_stride, stats)
    test_ds = make_windows(test_traj, length, cfg.dataset.test_stride, stats)
    return train_ds, test_ds


@dataclass
class PipelineResult:
    config: RunConfig
    train_schedule: PulseSchedule
    test_schedule: PulseSchedule
    train_traj: Trajectory
    test_traj: Trajectory
    train_ds: WindowedDataset
    test_ds: WindowedDataset
    model: TcnModel
    history: list[dict]
    metrics: ChannelMetrics
    model_seed: int


def run_pipeline(cfg: RunConfig, *, out_dir: str | None = None,
                 model_seed: int | None = None,
                 trajectories: tuple[Trajectory, Trajectory] | None = None,
                 progress=None) -> PipelineResult:
    """Simulate, window, train, and evaluate one configuration.

    With out_dir set, writes every artifact: resolved config, schedules,
    trajectory CSVs, dataset containers, loss log, checkpoint, metric report,
    and the truth/prediction series for plotting.
    """
    say = progress or (lambda msg: None)
    train_schedule = cfg.train_disturbance.build(cfg.simulation.train_duration)
    test_schedule = cfg.test_disturbance.build(cfg.simulation.test_duration)

    if trajectories is not None:
        train_traj, test_traj = trajectories
    else:
        say("simulating training trajectory")
        train_traj = simulate_trajectory(cfg, train_schedule,
                                         cfg.simulation.train_duration)
        say("simulating test trajectory")
        test_traj = simulate_trajectory(cfg, test_schedule,
                                        cfg.simulation.test_duration)

    train_ds, test_ds = build_datasets(cfg, train_traj, test_traj)
    say(f"windows: {len(train_ds)} train / {len(test_ds)} test "
        f"(L={cfg.dataset.history_length})")

    seed = cfg.seed if model_seed is None else model_seed
    model = TcnModel(cfg.model_for(cfg.dataset.history_length), seed=seed)

    paths = {}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        cfg.write(os.path.join(out_dir, "config.used.json"))
        train_schedule.to_csv(os.path.join(out_dir, "train_schedule.csv"))
        test_schedule.to_csv(os.path.join(out_dir, "test_schedule.csv"))
        for name, traj in (("train", train_traj), ("test", test_traj)):
            p = os.path.join(out_dir, f"{name}_trajectory.csv")
            traj.to_csv(p)
            paths[name] = p
        for name, ds in (("train", train_ds), ("test", test_ds)):
            save_dataset(ds, os.path.join(out_dir, f"{name}_windows.bin"),
                         source_path=paths[name],
                         source_sha256=file_sha256(paths[name]))

    say(f"training: {cfg.training.epochs} epochs, batch "
        f"{cfg.training.batch_size}, model seed {seed}")
    log_path = (os.path.join(out_dir, "loss_log.csv")
                if out_dir is not None else None)
    _, history = train(
        model, train_ds, cfg.training,
        checkpoint_dir=out_dir, loss_log_path=log_path,
        progress=(lambda rec: say(
            f"  epoch {rec['epoch']}: train_mse={rec['train_mse']:.3e}"
            + (f" val_mse={rec['val_mse']:.3e}" if rec['val_mse'] is not None
               else ""))) if progress else None,
    )

    say("evaluating on held-out windows")
    metrics, series = evaluate_model(model, test_ds, return_series=True)
    if out_dir is not None:
        metrics.to_csv(os.path.join(out_dir, "metrics.csv"))
        with open(os.path.join(out_dir, "metrics.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(metrics.format_table() + "\n")
        write_prediction_series(os.path.join(out_dir, "predictions.csv"),
                                *series)
    return PipelineResult(cfg, train_schedule, test_schedule, train_traj,
                          test_traj, train_ds, test_ds, model, history,
                          metrics, seed)


@dataclass
class SweepEntry:
    history_length: int
    model_seed: int
    metrics: ChannelMetrics


@dataclass
class SweepReport:
    entries: list[SweepEntry]

    def format_table(self) -> str:
        header = f"{'channel':<8}"
        for e in self.entries:
            header += f" {'L=' + str(e.history_length):>22}"
        lines = [header,
                 f"{'':<8}" + f" {'R^2':>10} {'MAE':>11}" * len(self.entries)]
        channels = self.entries[0].metrics.channels
        for i, ch in enumerate(channels):
            row = f"{ch:<8}"
            for e in self.entries:
                row += f" {e.metrics.r2[i]:>10.4f} {e.metrics.mae_physical[i]:>11.4g}"
            lines.append(row)
        row = f"{'avg':<8}"
        for e in self.entries:
            row += f" {e.metrics.avg_r2:>10.4f} {e.metrics.avg_mae_physical:>11.4g}"
        lines.append(row)
        lines.append("seeds: " + ", ".join(
            f"L={e.history_length}:{e.model_seed}" for e in self.entries))
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["channel"] + [
                col for e in self.entries
                for col in (f"r2_L{e.history_length}", f"mae_L{e.history_length}")])
            channels = self.entries[0].metrics.channels
            for i, ch in enumerate(channels):
                writer.writerow([ch] + [
                    val for e in self.entries
                    for val in (f"{e.metrics.r2[i]:.6g}",
                                f"{e.metrics.mae_physical[i]:.6g}")])
            writer.writerow(["avg"] + [
                val for e in self.entries
                for val in (f"{e.metrics.avg_r2:.6g}",
                            f"{e.metrics.avg_mae_physical:.6g}")])
            writer.writerow(["model_seed"] + [
                str(e.model_seed) for e in self.entries for _ in range(2)])


def history_length_sweep(cfg: RunConfig, lengths: list[int], *,
                         out_dir: str | None = None,
                         progress=None) -> SweepReport:
    """Train and evaluate one model per history length on shared
    trajectories; seeds are fixed per length (base seed + index)."""
    say = progress or (lambda msg: None)
    train_schedule = cfg.train_disturbance.build(cfg.simulation.train_duration)
    test_schedule = cfg.test_disturbance.build(cfg.simulation.test_duration)
    say("simulating shared trajectories")
    train_traj = simulate_trajectory(cfg, train_schedule,
                                     cfg.simulation.train_duration)
    test_traj = simulate_trajectory(cfg, test_schedule,
                                    cfg.simulation.test_duration)

    entries = []
    for i, length in enumerate(lengths):
        sub = dataclasses.replace(
            cfg, dataset=dataclasses.replace(cfg.dataset,
                                             history_length=int(length)))
        seed = cfg.seed + i
        say(f"[sweep] history length {length} (model seed {seed})")
        result = run_pipeline(sub, model_seed=seed,
                              trajectories=(train_traj, test_traj),
                              progress=progress)
        entries.append(SweepEntry(int(length), seed, result.metrics))

    report = SweepReport(entries)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        cfg.write(os.path.join(out_dir, "config.used.json"))
        report.to_csv(os.path.join(out_dir, "sweep.csv"))
        with open(os.path.join(out_dir, "sweep.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write(report.format_table() + "\n")
    return report


def generalization_experiment(cfg: RunConfig, *, out_dir: str | None = None,
                              progress=None) -> PipelineResult:
    """Train on the two-pulse extreme-amplitude schedule and evaluate on the
    standard test set."""
    minmax_train = dataclasses.replace(cfg.train_disturbance, kind="minmax")
    sub = dataclasses.replace(cfg, train_disturbance=minmax_train)
    return run_pipeline(sub, out_dir=out_dir, progress=progress)
