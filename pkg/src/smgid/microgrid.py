"""Reduced-order MVDC shipboard microgrid model.

The plant is a single DC bus fed by six droop-controlled sources: two
synchronous generators and two batteries under resistive droop, and two
supercapacitors under integral (capacitive) droop. Loads are a constant-power
load plus a pulsed-power load, both drawing P/V from the bus. The continuous
state has nine entries: the bus voltage, the six source currents, and the two
virtual-capacitor voltages of the supercapacitor droop integrators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, VoltageFloorViolation

# Column order used everywhere a state is flattened to an array.
STATE_FIELDS = (
    "v_o",
    "i_sga",
    "i_sgb",
    "i_ba",
    "i_bb",
    "i_sca",
    "i_scb",
    "v_sca",
    "v_scb",
)
INPUT_FIELDS = ("p_ppl", "p_cpl")

# The seven externally measured signals (bus voltage + source currents).
# The virtual-capacitor voltages are internal controller states.
MEASURED_FIELDS = STATE_FIELDS[:7]


@dataclass(frozen=True)
class SmgParameters:
    """Physical and control constants of the reduced-order microgrid.

    Droop resistances in ohms, inductances in henries, capacitances in
    farads, voltages in volts, powers in watts.
    """

    r_sga: float = 0.05
    r_sgb: float = 0.1
    r_ba: float = 0.225
    r_bb: float = 0.45
    r_sca: float = 0.01  # SC branch series resistance; no published value
    r_scb: float = 0.01
    l_sga: float = 1e-3
    l_sgb: float = 1e-3
    l_ba: float = 0.8e-3
    l_bb: float = 0.8e-3
    l_sca: float = 0.4e-3
    l_scb: float = 0.4e-3
    c_sca: float = 5.0
    c_scb: float = 10.0
    c_eq: float = 10e-3
    v_ref: float = 6000.0
    p_cpl: float = 10e6
    v_floor: float = 100.0  # hard fault level for the P/V load division

    def __post_init__(self):
        for name in ("l_sga", "l_sgb", "l_ba", "l_bb", "l_sca", "l_scb",
                     "c_sca", "c_scb", "c_eq"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        for name in ("r_sga", "r_sgb", "r_ba", "r_bb"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be strictly positive")
        for name in ("r_sca", "r_scb"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.v_ref <= 0:
            raise ConfigError("v_ref must be strictly positive")
        if self.v_floor <= 0:
            raise ConfigError("v_floor must be strictly positive")

    @classmethod
    def from_dict(cls, data: dict) -> "SmgParameters":
        """Build parameters from a mapping; missing keys take the defaults."""
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown microgrid parameter(s): {sorted(unknown)}")
        try:
            return cls(**{k: float(v) for k, v in data.items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid microgrid parameter value: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "SmgParameters":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class SmgState:
    """One point of the nine-entry continuous state."""

    v_o: float
    i_sga: float = 0.0
    i_sgb: float = 0.0
    i_ba: float = 0.0
    i_bb: float = 0.0
    i_sca: float = 0.0
    i_scb: float = 0.0
    v_sca: float = 0.0
    v_scb: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in STATE_FIELDS], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "SmgState":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (len(STATE_FIELDS),):
            raise ConfigError(f"state array must have shape (9,), got {arr.shape}")
        return cls(**{f: float(arr[i]) for i, f in enumerate(STATE_FIELDS)})


@dataclass(frozen=True)
class ExogenousInput:
    """Load powers applied at one instant (watts)."""

    p_ppl: float = 0.0
    p_cpl: float = 10e6


class _RhsWork:
    """Parameter vectors pre-folded for fast repeated rhs evaluation."""

    __slots__ = ("r", "l_inv", "c_inv", "v_ref", "c_eq_inv", "v_floor")

    def __init__(self, p: SmgParameters):
        self.r = np.array([p.r_sga, p.r_sgb, p.r_ba, p.r_bb, p.r_sca, p.r_scb])
        self.l_inv = 1.0 / np.array(
            [p.l_sga, p.l_sgb, p.l_ba, p.l_bb, p.l_sca, p.l_scb]
        )
        self.c_inv = 1.0 / np.array([p.c_sca, p.c_scb])
        self.v_ref = p.v_ref
        self.c_eq_inv = 1.0 / p.c_eq
        self.v_floor = p.v_floor


_WORK_CACHE: dict[int, tuple[SmgParameters, _RhsWork]] = {}


def _work_for(params: SmgParameters) -> _RhsWork:
    cached = _WORK_CACHE.get(id(params))
    if cached is not None and cached[0] is params:
        return cached[1]
    work = _RhsWork(params)
    _WORK_CACHE.clear()
    _WORK_CACHE[id(params)] = (params, work)
    return work


def rhs_array(params: SmgParameters, x: np.ndarray, p_ppl: float, p_cpl: float,
              out: np.ndarray | None = None) -> np.ndarray:
    """Time derivative of the flattened state. Array fast path for integrators.

    Raises VoltageFloorViolation before evaluating the P/V load terms if the
    bus voltage is at or below the floor.
    """
    w = _work_for(params)
    v_o = x[0]
    if v_o <= w.v_floor:
        raise VoltageFloorViolation(float(v_o), w.v_floor)
    if out is None:
        out = np.empty(9)
    currents = x[1:7]
    out[0] = (currents.sum() - (p_cpl + p_ppl) / v_o) * w.c_eq_inv
    # droop branches: L di/dt = V_ref - R i - V_o (- V_h for the SC branches)
    np.multiply(currents, w.r, out=out[1:7])
    np.subtract(w.v_ref - v_o, out[1:7], out=out[1:7])
    out[5:7] -= x[7:9]
    out[1:7] *= w.l_inv
    np.multiply(x[5:7], w.c_inv, out=out[7:9])
    return out


def rhs(params: SmgParameters, x: SmgState, u: ExogenousInput) -> SmgState:
    """Continuous-time derivative of the nine-entry state, per-second rates."""
    d = rhs_array(params, x.to_array(), u.p_ppl, u.p_cpl)
    return SmgState.from_array(d)
