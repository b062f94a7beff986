"""Windowed supervised-learning datasets for one-step-ahead prediction.

The model sees eight channels: the seven measured signals (bus voltage and
the six source currents) plus the pulsed-load power. Channels are min-max
normalized with statistics fitted on the training trajectory only; the same
statistics are reused for test data. A window of length L at offset o covers
records [o, o + L) and its target is the seven measured signals at o + L.

Windows are served as views over the normalized trajectory, so stride-1
datasets over long runs never materialize the full window tensor. The
on-disk container does materialize windows; choose the stride accordingly.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IntegrityError, TrajectoryTooShort
from .microgrid import MEASURED_FIELDS
from .simulate import Trajectory

MODEL_CHANNELS = (*MEASURED_FIELDS, "p_ppl")
TARGET_CHANNELS = MEASURED_FIELDS

_MAGIC = b"SMGWINDS"
_VERSION = 1
_HEADER = struct.Struct("<8sII")  # magic, version, reserved


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel (min, max) over the eight model channels."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        if self.mins.shape != (len(MODEL_CHANNELS),) or \
                self.maxs.shape != (len(MODEL_CHANNELS),):
            raise ConfigError("stats must cover exactly the 8 model channels")
        if np.any(self.maxs < self.mins):
            raise ConfigError("channel max below min")

    @property
    def constant(self) -> np.ndarray:
        """Channels with max == min, normalized to 0 by convention."""
        return self.maxs == self.mins

    def _index(self, channel: str) -> int:
        try:
            return MODEL_CHANNELS.index(channel)
        except ValueError:
            raise KeyError(channel) from None

    def normalize(self, x, channel: str):
        i = self._index(channel)
        if self.constant[i]:
            return np.zeros_like(np.asarray(x, dtype=float)) + 0.0
        return (x - self.mins[i]) / (self.maxs[i] - self.mins[i])

    def denormalize(self, y, channel: str):
        i = self._index(channel)
        if self.constant[i]:
            return np.zeros_like(np.asarray(y, dtype=float)) + self.mins[i]
        return y * (self.maxs[i] - self.mins[i]) + self.mins[i]

    def normalize_matrix(self, channels: np.ndarray) -> np.ndarray:
        """Normalize an (8, n) channel matrix in one shot."""
        span = np.where(self.constant, 1.0, self.maxs - self.mins)
        out = (channels - self.mins[:, None]) / span[:, None]
        out[self.constant, :] = 0.0
        return out

    def denormalize_targets(self, y: np.ndarray) -> np.ndarray:
        """Denormalize (..., 7) target rows back to physical units."""
        mins = self.mins[: len(TARGET_CHANNELS)]
        maxs = self.maxs[: len(TARGET_CHANNELS)]
        const = self.constant[: len(TARGET_CHANNELS)]
        span = np.where(const, 0.0, maxs - mins)
        return y * span + mins

    def to_dict(self) -> dict:
        return {
            ch: {"min": float(self.mins[i]), "max": float(self.maxs[i])}
            for i, ch in enumerate(MODEL_CHANNELS)
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationStats":
        try:
            mins = np.array([data[ch]["min"] for ch in MODEL_CHANNELS], dtype=float)
            maxs = np.array([data[ch]["max"] for ch in MODEL_CHANNELS], dtype=float)
        except KeyError as exc:
            raise ConfigError(f"stats block missing channel {exc}") from exc
        return cls(mins=mins, maxs=maxs)


def channel_matrix(traj: Trajectory) -> np.ndarray:
    """Stack the eight model channels of a trajectory into an (8, n) matrix."""
    return np.vstack([traj.column(ch) for ch in MODEL_CHANNELS])


def fit_normalizer(traj: Trajectory) -> NormalizationStats:
    """Per-channel min and max over every record of the trajectory."""
    mat = channel_matrix(traj)
    return NormalizationStats(mins=mat.min(axis=1), maxs=mat.max(axis=1))


class WindowedDataset:
    """Normalized sliding windows with next-step targets.

    Backed either by a normalized trajectory matrix (windows are views,
    memory-light) or by a materialized window tensor loaded from disk.
    """

    def __init__(self, history_length: int, stride: int,
                 stats: NormalizationStats, *,
                 channel_data: np.ndarray | None = None,
                 num_windows: int | None = None,
                 inputs: np.ndarray | None = None,
                 targets: np.ndarray | None = None,
                 dt: float | None = None, t0: float = 0.0):
        self.history_length = int(history_length)
        self.stride = int(stride)
        self.stats = stats
        self.dt = dt
        self.t0 = t0
        if channel_data is not None:
            self._data = np.ascontiguousarray(channel_data)
            self._windows = np.lib.stride_tricks.sliding_window_view(
                self._data, history_length, axis=1)
            self._inputs = None
            self._targets = None
            self.num_windows = num_windows
        else:
            if inputs is None or targets is None:
                raise ConfigError("dataset needs either channel_data or inputs+targets")
            self._data = None
            self._windows = None
            self._inputs = inputs
            self._targets = targets
            self.num_windows = inputs.shape[0]

    def __len__(self) -> int:
        return self.num_windows

    def offsets(self, indices) -> np.ndarray:
        return np.asarray(indices) * self.stride

    def target_times(self, indices) -> np.ndarray:
        """Absolute time of each window's target sample."""
        if self.dt is None:
            raise ConfigError("dataset carries no time base")
        return self.t0 + (self.offsets(indices) + self.history_length) * self.dt

    def get_batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """Materialize windows (B, 8, L) and targets (B, 7) for the indices."""
        idx = np.asarray(indices)
        if self._data is not None:
            offs = idx * self.stride
            x = self._windows[:, offs, :].transpose(1, 0, 2).copy()
            y = self._data[: len(TARGET_CHANNELS), offs + self.history_length].T.copy()
            return x, y
        return np.asarray(self._inputs[idx]), np.asarray(self._targets[idx])

    def window(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        x, y = self.get_batch([i])
        return x[0], y[0]


def make_windows(traj: Trajectory, history_length: int, stride: int,
                 stats: NormalizationStats) -> WindowedDataset:
    """Build the windowed dataset over a trajectory at the given stride."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if history_length < 1:
        raise ConfigError(f"history length must be >= 1, got {history_length}")
    n = len(traj)
    if n <= history_length:
        raise TrajectoryTooShort(
            f"trajectory has {n} records; need more than history length "
            f"{history_length}"
        )
    num_windows = (n - 1 - history_length) // stride + 1
    data = stats.normalize_matrix(channel_matrix(traj))
    return WindowedDataset(history_length, stride, stats,
                           channel_data=data, num_windows=num_windows,
                           dt=traj.dt, t0=traj.t0)


def save_dataset(ds: WindowedDataset, path, *, source_path=None,
                 source_sha256: str | None = None, chunk: int = 256) -> dict:
    """Write the documented flat binary container plus its JSON sidecar.

    Layout: 16-byte magic+version header, float64 little-endian windows of
    shape (num_windows, 8, L), targets (num_windows, 7), then the stats
    block of per-channel (min, max) pairs. Returns the sidecar mapping.
    """
    path = str(path)
    digest = hashlib.sha256()

    def emit(fh, payload: bytes):
        fh.write(payload)
        digest.update(payload)

    with open(path, "wb") as fh:
        emit(fh, _HEADER.pack(_MAGIC, _VERSION, 0))
        for lo in range(0, len(ds), chunk):
            idx = np.arange(lo, min(lo + chunk, len(ds)))
            x, _ = ds.get_batch(idx)
            emit(fh, np.ascontiguousarray(x, dtype="<f8").tobytes())
        for lo in range(0, len(ds), chunk):
            idx = np.arange(lo, min(lo + chunk, len(ds)))
            _, y = ds.get_batch(idx)
            emit(fh, np.ascontiguousarray(y, dtype="<f8").tobytes())
        stats_block = np.stack([ds.stats.mins, ds.stats.maxs], axis=1)
        emit(fh, np.ascontiguousarray(stats_block, dtype="<f8").tobytes())

    sidecar = {
        "format": "smgid-windows",
        "version": _VERSION,
        "history_length": ds.history_length,
        "stride": ds.stride,
        "num_windows": len(ds),
        "channels": list(MODEL_CHANNELS),
        "targets": list(TARGET_CHANNELS),
        "stats": ds.stats.to_dict(),
        "dt": ds.dt,
        "t0": ds.t0,
        "data_sha256": digest.hexdigest(),
    }
    if source_path is not None:
        sidecar["source"] = {"path": str(source_path), "sha256": source_sha256}
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar


def sidecar_path(path) -> str:
    return str(path) + ".json"


def file_sha256(path, chunk: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            block = fh.read(chunk)
            if not block:
                break
            digest.update(block)
    return digest.hexdigest()


def load_dataset(path, *, verify: bool = True) -> WindowedDataset:
    """Load a dataset container; windows are memory-mapped, not copied."""
    path = str(path)
    with open(sidecar_path(path), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("format") != "smgid-windows" or meta.get("version") != _VERSION:
        raise ConfigError(f"not a smgid dataset sidecar: {sidecar_path(path)}")
    if verify and file_sha256(path) != meta["data_sha256"]:
        raise IntegrityError(f"dataset {path} does not match its recorded digest")

    num = int(meta["num_windows"])
    length = int(meta["history_length"])
    n_ch = len(MODEL_CHANNELS)
    n_tg = len(TARGET_CHANNELS)
    with open(path, "rb") as fh:
        magic, version, _ = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != _MAGIC or version != _VERSION:
        raise ConfigError(f"not a smgid dataset container: {path}")

    inputs_off = _HEADER.size
    targets_off = inputs_off + num * n_ch * length * 8
    stats_off = targets_off + num * n_tg * 8
    inputs = np.memmap(path, dtype="<f8", mode="r", offset=inputs_off,
                       shape=(num, n_ch, length))
    targets = np.memmap(path, dtype="<f8", mode="r", offset=targets_off,
                        shape=(num, n_tg))
    stats_block = np.fromfile(path, dtype="<f8", count=2 * n_ch,
                              offset=stats_off).reshape(n_ch, 2)
    stats = NormalizationStats.from_dict(meta["stats"])
    if not (np.array_equal(stats_block[:, 0], stats.mins)
            and np.array_equal(stats_block[:, 1], stats.maxs)):
        raise IntegrityError(f"stats block in {path} disagrees with sidecar")

    return WindowedDataset(length, int(meta["stride"]), stats,
                           inputs=inputs, targets=targets,
                           dt=meta.get("dt"), t0=meta.get("t0") or 0.0)
