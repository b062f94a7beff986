"""smgid: reduced-order MVDC shipboard microgrid simulation and TCN-based
one-step dynamics learning."""

__version__ = "0.1.0"

from .config import RunConfig
from .dataset import (
    MODEL_CHANNELS,
    TARGET_CHANNELS,
    NormalizationStats,
    WindowedDataset,
    fit_normalizer,
    load_dataset,
    make_windows,
    save_dataset,
)
from .errors import SmgidError
from .evaluation import ChannelMetrics, evaluate_model, mae, r_squared, rollout
from .experiments import (
    generalization_experiment,
    history_length_sweep,
    run_pipeline,
)
from .microgrid import ExogenousInput, SmgParameters, SmgState, rhs
from .pulses import PulseSchedule, minmax_two_pulse, random_pulse_train
from .simulate import Trajectory, downsample, integrate, steady_state
from .tcn import TcnConfig, TcnModel, load_checkpoint, mse_loss, save_checkpoint
from .training import TrainConfig, grad_check, train

__all__ = [
    "ChannelMetrics",
    "ExogenousInput",
    "MODEL_CHANNELS",
    "NormalizationStats",
    "PulseSchedule",
    "RunConfig",
    "SmgParameters",
    "SmgState",
    "SmgidError",
    "TARGET_CHANNELS",
    "TcnConfig",
    "TcnModel",
    "TrainConfig",
    "Trajectory",
    "WindowedDataset",
    "downsample",
    "evaluate_model",
    "fit_normalizer",
    "generalization_experiment",
    "grad_check",
    "history_length_sweep",
    "integrate",
    "load_checkpoint",
    "load_dataset",
    "mae",
    "make_windows",
    "minmax_two_pulse",
    "mse_loss",
    "r_squared",
    "random_pulse_train",
    "rhs",
    "rollout",
    "run_pipeline",
    "save_checkpoint",
    "save_dataset",
    "steady_state",
    "train",
]
