"""Run configuration: one nested JSON document drives every pipeline stage.

Sections: microgrid, simulation, disturbance.train / disturbance.test,
dataset, model, training, plus top-level seed and output_dir. Any key left
out takes the documented default; command-line --set overrides win over the
file. The resolved document is copied into every output directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError
from .microgrid import SmgParameters
from .pulses import PulseSchedule, minmax_two_pulse, random_pulse_train
from .tcn import TcnConfig
from .training import TrainConfig


@dataclass(frozen=True)
class SimulationSettings:
    dt: float = 50e-6
    record_every: int = 10  # downsample factor; 10 -> 0.5 ms records
    train_duration: float = 20.0
    test_duration: float = 10.0

    def __post_init__(self):
        if self.dt <= 0 or self.train_duration <= 0 or self.test_duration <= 0:
            raise ConfigError("simulation durations and dt must be positive")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")


@dataclass(frozen=True)
class DisturbanceSettings:
    """Pulse-schedule recipe; kind is 'random', 'minmax', or 'none'."""

    kind: str = "random"
    seed: int = 11
    amp_min: float = -5e6
    amp_max: float = 5e6
    period_range: tuple[float, float] = (0.5, 2.0)
    duty_range: tuple[float, float] = (0.2, 0.8)
    duties: tuple[float, float] = (0.4, 0.7)  # used by the 'minmax' kind

    def __post_init__(self):
        if self.kind not in ("random", "minmax", "none"):
            raise ConfigError(f"unknown disturbance kind {self.kind!r}")

    def build(self, duration: float) -> PulseSchedule:
        if self.kind == "none":
            return PulseSchedule([])
        if self.kind == "minmax":
            return minmax_two_pulse(duration, self.amp_min, self.amp_max,
                                    self.duties)
        return random_pulse_train(self.seed, duration, self.amp_min,
                                  self.amp_max, self.period_range,
                                  self.duty_range)


@dataclass(frozen=True)
class DatasetSettings:
    history_length: int = 1000
    train_stride: int = 10
    test_stride: int = 16

    def __post_init__(self):
        if self.history_length < 1:
            raise ConfigError("history_length must be >= 1")
        if self.train_stride < 1 or self.test_stride < 1:
            raise ConfigError("strides must be >= 1")


_TUPLE_KEYS = ("period_range", "duty_range", "duties")


def _settings_from(cls, data: dict, section: str):
    import dataclasses

    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {sorted(unknown)}")
    kwargs = {k: tuple(v) if k in _TUPLE_KEYS and isinstance(v, list) else v
              for k, v in data.items()}
    return cls(**kwargs)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output_dir: str = "runs/out"
    microgrid: SmgParameters = field(default_factory=SmgParameters)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    train_disturbance: DisturbanceSettings = field(
        default_factory=DisturbanceSettings)
    test_disturbance: DisturbanceSettings = field(default_factory=lambda:
        DisturbanceSettings(seed=1213, period_range=(0.6, 1.8),
                            duty_range=(0.25, 0.75)))
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    model: TcnConfig | None = None  # None -> derived from history_length
    training: TrainConfig = field(default_factory=lambda: TrainConfig(
        batch_size=8, learning_rate=3e-3, epochs=10))

    def model_for(self, history_length: int) -> TcnConfig:
        """Explicit model section if present, else the desk-scale default:
        the smallest dilation ladder covering the history, 16 channels,
        no dropout (desk runs are underfit), float32 for speed."""
        if self.model is not None:
            return self.model
        return TcnConfig.for_history(history_length, channels=16,
                                     dropout=0.0, dtype="float32")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "microgrid": self.microgrid.to_dict(),
            "simulation": {
                "dt": self.simulation.dt,
                "record_every": self.simulation.record_every,
                "train_duration": self.simulation.train_duration,
                "test_duration": self.simulation.test_duration,
            },
            "disturbance": {
                "train": _disturbance_dict(self.train_disturbance),
                "test": _disturbance_dict(self.test_disturbance),
            },
            "dataset": {
                "history_length": self.dataset.history_length,
                "train_stride": self.dataset.train_stride,
                "test_stride": self.dataset.test_stride,
            },
            "model": self.model_for(self.dataset.history_length).to_dict(),
            "training": self.training.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {"seed", "output_dir", "microgrid", "simulation", "disturbance",
                 "dataset", "model", "training"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown top-level config key(s): {sorted(unknown)}")
        dist = data.get("disturbance", {})
        unknown_dist = set(dist) - {"train", "test"}
        if unknown_dist:
            raise ConfigError(
                f"unknown key(s) in 'disturbance': {sorted(unknown_dist)}")
        kwargs = {}
        if "seed" in data:
            kwargs["seed"] = int(data["seed"])
        if "output_dir" in data:
            kwargs["output_dir"] = str(data["output_dir"])
        if "microgrid" in data:
            kwargs["microgrid"] = SmgParameters.from_dict(data["microgrid"])
        if "simulation" in data:
            kwargs["simulation"] = _settings_from(
                SimulationSettings, data["simulation"], "simulation")
        if "train" in dist:
            kwargs["train_disturbance"] = _settings_from(
                DisturbanceSettings, dist["train"], "disturbance.train")
        if "test" in dist:
            kwargs["test_disturbance"] = _settings_from(
                DisturbanceSettings, dist["test"], "disturbance.test")
        if "dataset" in data:
            kwargs["dataset"] = _settings_from(
                DatasetSettings, data["dataset"], "dataset")
        if "model" in data and data["model"] is not None:
            try:
                kwargs["model"] = TcnConfig.from_dict(data["model"])
            except TypeError as exc:
                raise ConfigError(f"invalid model section: {exc}") from exc
        if "training" in data:
            try:
                kwargs["training"] = TrainConfig.from_dict(data["training"])
            except TypeError as exc:
                raise ConfigError(f"invalid training section: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, overrides: list[str] | None = None) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if overrides:
            data = apply_overrides(data, overrides)
        return cls.from_dict(data)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _disturbance_dict(d: DisturbanceSettings) -> dict:
    return {
        "kind": d.kind,
        "seed": d.seed,
        "amp_min": d.amp_min,
        "amp_max": d.amp_max,
        "period_range": list(d.period_range),
        "duty_range": list(d.duty_range),
        "duties": list(d.duties),
    }


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply dotted-path overrides like 'training.epochs=8' on top of the
    parsed config document. Values are parsed as JSON when possible."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form path=value")
        path, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        keys = path.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {path!r} crosses a non-section")
        node[keys[-1]] = value
    return data
