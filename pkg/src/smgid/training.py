"""Mini-batch training of the network with adaptive-moment updates.

Single-worker and fully seeded: the shuffle order, the validation split, and
the dropout masks all derive from one generator, so identical configurations
produce bit-identical final parameters and checkpoints.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .dataset import WindowedDataset
from .errors import ConfigError, NonFiniteLoss
from .tcn import TcnModel, save_checkpoint

LOSS_LOG_HEADER = ["step", "epoch", "train_mse", "val_mse"]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 10
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    val_fraction: float = 0.1
    checkpoint_interval: int = 0  # epochs between checkpoints; 0 = final only
    grad_clip: float | None = 1.0  # global gradient norm; None disables
    max_steps: int | None = None  # optional hard cap on optimizer steps

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ConfigError("learning rate must be non-negative")
        for name in ("beta1", "beta2"):
            if not (0.0 < getattr(self, name) < 1.0):
                raise ConfigError(f"{name} must lie in (0, 1)")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigError("val_fraction must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "shuffle": self.shuffle,
            "val_fraction": self.val_fraction,
            "checkpoint_interval": self.checkpoint_interval,
            "grad_clip": self.grad_clip,
            "max_steps": self.max_steps,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


class AdamState:
    """First/second moment accumulators mirroring the model's parameters."""

    def __init__(self, model: TcnModel):
        self.m = {name: np.zeros_like(arr) for name, arr in model.parameters()}
        self.v = {name: np.zeros_like(arr) for name, arr in model.parameters()}
        self.t = 0

    def update(self, model: TcnModel, grads: dict[str, np.ndarray],
               cfg: TrainConfig) -> None:
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, arr in model.parameters():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            arr -= cfg.learning_rate * (m / bias1) / (np.sqrt(v / bias2)
                                                      + cfg.epsilon)


def _global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.square(g, dtype=np.float64)))
    return float(np.sqrt(total))


def _validation_mse(model: TcnModel, dataset: WindowedDataset,
                    indices: np.ndarray, batch: int = 256) -> float:
    sse = 0.0
    count = 0
    for lo in range(0, len(indices), batch):
        idx = indices[lo:lo + batch]
        x, y = dataset.get_batch(idx)
        pred = model.forward(x)
        d = np.asarray(pred, dtype=np.float64) - y
        sse += float(np.sum(d * d))
        count += d.size
    return sse / count


def split_indices(n: int, val_fraction: float,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint train/validation window indices. Note that stride-1 windows
    still overlap temporally; the split is by window index only."""
    perm = rng.permutation(n)
    n_val = int(round(n * val_fraction))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(model: TcnModel, dataset: WindowedDataset, cfg: TrainConfig, *,
          checkpoint_dir=None, loss_log_path=None,
          progress=None) -> tuple[TcnModel, list[dict]]:
    """Train in place; returns the model and the per-epoch loss history."""
    if len(dataset) < 1:
        raise ConfigError("dataset is empty")
    if dataset.history_length > model.config.receptive_field:
        # windows longer than the receptive field silently waste history
        raise ConfigError(
            f"history length {dataset.history_length} exceeds the model's "
            f"receptive field {model.config.receptive_field}"
        )

    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx = split_indices(len(dataset), cfg.val_fraction, rng)
    if len(train_idx) == 0:
        raise ConfigError("validation fraction leaves no training windows")

    log_fh = None
    log_writer = None
    if loss_log_path is not None:
        log_fh = open(loss_log_path, "w", newline="", encoding="utf-8")
        log_writer = csv.writer(log_fh)
        log_writer.writerow(LOSS_LOG_HEADER)

    optimizer = AdamState(model)
    history: list[dict] = []
    step = 0
    try:
        for epoch in range(cfg.epochs):
            order = rng.permutation(train_idx) if cfg.shuffle else train_idx
            epoch_losses = []
            for lo in range(0, len(order), cfg.batch_size):
                if cfg.max_steps is not None and step >= cfg.max_steps:
                    break
                batch_idx = order[lo:lo + cfg.batch_size]
                x, y = dataset.get_batch(batch_idx)
                loss, grads = model.loss_and_grads(x, y, rng)
                if not np.isfinite(loss):
                    raise NonFiniteLoss(step, loss)
                if cfg.grad_clip is not None:
                    norm = _global_grad_norm(grads)
                    if norm > cfg.grad_clip:
                        scale = cfg.grad_clip / norm
                        for g in grads.values():
                            g *= scale
                optimizer.update(model, grads, cfg)
                step += 1
                epoch_losses.append(loss)
                if log_writer is not None:
                    log_writer.writerow([step, epoch, f"{loss:.17g}", ""])

            val_mse = (_validation_mse(model, dataset, val_idx)
                       if len(val_idx) else None)
            record = {
                "epoch": epoch,
                "steps": step,
                "train_mse": float(np.mean(epoch_losses)) if epoch_losses else None,
                "val_mse": val_mse,
            }
            history.append(record)
            if log_writer is not None and epoch_losses:
                log_writer.writerow([
                    step, epoch, f"{record['train_mse']:.17g}",
                    "" if val_mse is None else f"{val_mse:.17g}",
                ])
            if progress is not None:
                progress(record)
            if (checkpoint_dir is not None and cfg.checkpoint_interval > 0
                    and (epoch + 1) % cfg.checkpoint_interval == 0):
                save_checkpoint(model, os.path.join(
                    checkpoint_dir, f"checkpoint_epoch{epoch}.bin"))
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break
        if checkpoint_dir is not None:
            save_checkpoint(model, os.path.join(checkpoint_dir, "final.bin"))
    finally:
        if log_fh is not None:
            log_fh.close()
    return model, history


def grad_check(model: TcnModel, sample: tuple, epsilon: float = 1e-5, *,
               max_evals: int | None = None, seed: int = 0) -> float:
    """Worst relative disagreement between analytic gradients and central
    finite differences over the model's parameters.

    Coordinates where both gradients are tiny are compared absolutely, so a
    zero-loss point reports ~0 rather than 0/0. For large models pass
    max_evals to check a seeded random subsample of coordinates.
    """
    if model.dtype != np.float64:
        raise ConfigError("gradient checks require a float64 model")
    window, target = sample
    _, analytic = model.loss_and_grads(window, target, training=False)

    def loss_now() -> float:
        pred = model.forward(window)
        d = np.asarray(pred) - np.asarray(target)
        return float(np.mean(d * d))

    coords = [(name, arr, j)
              for name, arr in model.parameters()
              for j in range(arr.size)]
    if max_evals is not None and len(coords) > max_evals:
        picker = np.random.default_rng(seed)
        chosen = picker.choice(len(coords), size=max_evals, replace=False)
        coords = [coords[int(i)] for i in chosen]

    worst = 0.0
    for name, arr, j in coords:
        orig = arr.flat[j]
        arr.flat[j] = orig + epsilon
        lp = loss_now()
        arr.flat[j] = orig - epsilon
        lm = loss_now()
        arr.flat[j] = orig
        numeric = (lp - lm) / (2.0 * epsilon)
        exact = float(analytic[name].flat[j])
        denom = abs(numeric) + abs(exact)
        err = abs(numeric - exact) if denom < 1e-8 else abs(numeric - exact) / denom
        worst = max(worst, err)
    return worst
