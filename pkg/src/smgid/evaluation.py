"""Prediction-accuracy metrics and evaluation drivers.

MAE is reported both in physical units and on the normalized scale, since
min-max scaling changes its magnitude per channel; R-squared is invariant
under the per-channel affine denormalization, so a single value is reported.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import TARGET_CHANNELS, NormalizationStats, WindowedDataset
from .errors import ConstantTruth, LengthMismatch
from .pulses import PulseSchedule


def mae(truth, pred) -> float:
    """Mean absolute difference between two equally long sequences."""
    t = np.asarray(truth, dtype=float)
    p = np.asarray(pred, dtype=float)
    if t.shape != p.shape or t.size == 0:
        raise LengthMismatch(f"got shapes {t.shape} and {p.shape}")
    return float(np.mean(np.abs(t - p)))


def r_squared(truth, pred) -> float:
    """Coefficient of determination, 1 - SSE/SST about the truth mean."""
    t = np.asarray(truth, dtype=float)
    p = np.asarray(pred, dtype=float)
    if t.shape != p.shape:
        raise LengthMismatch(f"got shapes {t.shape} and {p.shape}")
    if t.size < 2:
        raise LengthMismatch("need at least two samples")
    sst = float(np.sum((t - t.mean()) ** 2))
    if sst == 0.0:
        raise ConstantTruth("ground truth is constant; R^2 is undefined")
    sse = float(np.sum((t - p) ** 2))
    return 1.0 - sse / sst


@dataclass(frozen=True)
class ChannelMetrics:
    """Per-channel prediction accuracy over a test dataset."""

    channels: tuple[str, ...]
    mae_physical: np.ndarray
    mae_normalized: np.ndarray
    r2: np.ndarray

    @property
    def avg_mae_physical(self) -> float:
        return float(np.mean(self.mae_physical))

    @property
    def avg_mae_normalized(self) -> float:
        return float(np.mean(self.mae_normalized))

    @property
    def avg_r2(self) -> float:
        return float(np.mean(self.r2))

    def rows(self) -> list[dict]:
        """One mapping per channel plus the cross-channel average."""
        out = []
        for i, ch in enumerate(self.channels):
            out.append({
                "channel": ch,
                "r2": float(self.r2[i]),
                "mae": float(self.mae_physical[i]),
                "mae_normalized": float(self.mae_normalized[i]),
            })
        out.append({
            "channel": "avg",
            "r2": self.avg_r2,
            "mae": self.avg_mae_physical,
            "mae_normalized": self.avg_mae_normalized,
        })
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(
                fh, fieldnames=["channel", "r2", "mae", "mae_normalized"])
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v)
                                 for k, v in row.items()})

    def format_table(self) -> str:
        lines = [f"{'channel':<8} {'R^2':>10} {'MAE':>14} {'MAE(norm)':>12}"]
        for row in self.rows():
            lines.append(f"{row['channel']:<8} {row['r2']:>10.4f} "
                         f"{row['mae']:>14.6g} {row['mae_normalized']:>12.3e}")
        return "\n".join(lines)


def evaluate_model(model, dataset: WindowedDataset, *, batch: int = 256,
                   return_series: bool = False):
    """One-step predictions over every window of a test dataset.

    The dataset must have been built with the training normalizer. Returns
    ChannelMetrics; with return_series also returns (times, truth, pred)
    arrays in physical units for plotting exports.
    """
    predict = getattr(model, "forward", model)
    stats: NormalizationStats = dataset.stats
    preds = np.empty((len(dataset), len(TARGET_CHANNELS)))
    truths = np.empty_like(preds)
    for lo in range(0, len(dataset), batch):
        idx = np.arange(lo, min(lo + batch, len(dataset)))
        x, y = dataset.get_batch(idx)
        preds[idx] = np.asarray(predict(x), dtype=np.float64)
        truths[idx] = y

    truth_phys = stats.denormalize_targets(truths)
    pred_phys = stats.denormalize_targets(preds)
    n_ch = len(TARGET_CHANNELS)
    metrics = ChannelMetrics(
        channels=TARGET_CHANNELS,
        mae_physical=np.array([mae(truth_phys[:, i], pred_phys[:, i])
                               for i in range(n_ch)]),
        mae_normalized=np.array([mae(truths[:, i], preds[:, i])
                                 for i in range(n_ch)]),
        r2=np.array([r_squared(truth_phys[:, i], pred_phys[:, i])
                     for i in range(n_ch)]),
    )
    if return_series:
        times = dataset.target_times(np.arange(len(dataset)))
        return metrics, (times, truth_phys, pred_phys)
    return metrics


def write_prediction_series(path, times, truth, pred) -> None:
    """CSV of (time, truth, prediction) per channel for external plotting."""
    header = ["t"]
    for ch in TARGET_CHANNELS:
        header += [f"{ch}_truth", f"{ch}_pred"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(times)):
            row = [f"{times[i]:.9g}"]
            for j in range(len(TARGET_CHANNELS)):
                row += [f"{truth[i, j]:.17g}", f"{pred[i, j]:.17g}"]
            writer.writerow(row)


def rollout(model, window0: np.ndarray, stats: NormalizationStats,
            schedule: PulseSchedule, dt: float, t_last: float,
            horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Autoregressive multi-step prediction.

    window0 is a normalized (8, L) window whose final sample sits at absolute
    time t_last. Each prediction is fed back as the next measured sample; the
    pulsed-load channel always comes from the schedule. Returns the predicted
    times and the predictions in physical units, shape (horizon, 7).
    """
    predict = getattr(model, "forward", model)
    if horizon < 1:
        raise LengthMismatch("horizon must be >= 1")
    window = np.array(window0, dtype=np.float64)
    n_targets = len(TARGET_CHANNELS)
    preds_norm = np.empty((horizon, n_targets))
    times = t_last + dt * np.arange(1, horizon + 1)
    for k in range(horizon):
        y = np.asarray(predict(window), dtype=np.float64)
        preds_norm[k] = y
        next_col = np.empty(window.shape[0])
        next_col[:n_targets] = y
        next_col[n_targets] = stats.normalize(schedule.evaluate(times[k]), "p_ppl")
        window[:, :-1] = window[:, 1:]
        window[:, -1] = next_col
    return times, stats.denormalize_targets(preds_norm)
