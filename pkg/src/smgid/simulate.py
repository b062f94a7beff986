"""Fixed-step integration of the microgrid ODE and trajectory handling.

The integrator is classic fourth-order Runge-Kutta with the exogenous load
held constant across each step (sample-and-hold at the step start, matching
the piecewise-constant pulse waveforms). An independent steady-state solver
provides the equilibrium oracle used to cross-check the right-hand side and
to initialize simulations without a startup transient.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, NoEquilibrium, VoltageFloorViolation
from .microgrid import (
    INPUT_FIELDS,
    STATE_FIELDS,
    ExogenousInput,
    SmgParameters,
    SmgState,
    rhs_array,
)

CSV_HEADER = ["t", *STATE_FIELDS, *INPUT_FIELDS]

BISECTION_TOL = 1e-10  # volts; tighter than any downstream test tolerance


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled run: one state row and one input row per record."""

    dt: float
    t0: float
    states: np.ndarray  # (n, 9) in STATE_FIELDS order
    inputs: np.ndarray  # (n, 2) in INPUT_FIELDS order

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("trajectory dt must be positive")
        if self.states.ndim != 2 or self.states.shape[1] != len(STATE_FIELDS):
            raise ConfigError(f"states must be (n, 9), got {self.states.shape}")
        if self.inputs.shape != (self.states.shape[0], len(INPUT_FIELDS)):
            raise ConfigError("states and inputs must have matching lengths")
        if len(self.states) < 1:
            raise ConfigError("trajectory must contain at least one record")

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    def state(self, i: int) -> SmgState:
        return SmgState.from_array(self.states[i])

    def input(self, i: int) -> ExogenousInput:
        return ExogenousInput(p_ppl=float(self.inputs[i, 0]),
                              p_cpl=float(self.inputs[i, 1]))

    def column(self, name: str) -> np.ndarray:
        if name in STATE_FIELDS:
            return self.states[:, STATE_FIELDS.index(name)]
        if name in INPUT_FIELDS:
            return self.inputs[:, INPUT_FIELDS.index(name)]
        raise KeyError(name)

    def to_csv(self, path) -> None:
        """Write with full round-trip precision (17 significant digits)."""
        times = self.times
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for i in range(len(self)):
                row = [times[i], *self.states[i], *self.inputs[i]]
                writer.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != CSV_HEADER:
                raise ConfigError(f"unexpected trajectory header: {header}")
            data = np.array([[float(v) for v in row] for row in reader])
        if data.ndim != 2 or len(data) < 1:
            raise ConfigError(f"empty or malformed trajectory file: {path}")
        t = data[:, 0]
        if len(t) > 1:
            dt = t[1] - t[0]
            if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
                raise ConfigError("trajectory time axis is not uniformly spaced")
        else:
            dt = 1.0  # single record; dt is irrelevant but must be positive
        return cls(dt=float(dt), t0=float(t[0]), states=data[:, 1:10],
                   inputs=data[:, 10:12])


def _rk4_step(params: SmgParameters, x: tuple, p_ppl: float, p_cpl: float,
              dt: float) -> tuple:
    """One RK4 step on scalar-unpacked state; the hot path of integrate.

    Same dynamics as microgrid.rhs_array, hand-inlined because the per-call
    numpy overhead dominates a nine-state ODE (kept consistent by test).
    """
    v_ref = params.v_ref
    v_floor = params.v_floor
    inv_ceq = 1.0 / params.c_eq
    r1, r2, r3, r4 = params.r_sga, params.r_sgb, params.r_ba, params.r_bb
    r5, r6 = params.r_sca, params.r_scb
    il1, il2 = 1.0 / params.l_sga, 1.0 / params.l_sgb
    il3, il4 = 1.0 / params.l_ba, 1.0 / params.l_bb
    il5, il6 = 1.0 / params.l_sca, 1.0 / params.l_scb
    ic1, ic2 = 1.0 / params.c_sca, 1.0 / params.c_scb

    def deriv(s):
        v, i1, i2, i3, i4, i5, i6, w1, w2 = s
        if v <= v_floor:
            raise VoltageFloorViolation(v, v_floor)
        return (
            (i1 + i2 + i3 + i4 + i5 + i6 - (p_cpl + p_ppl) / v) * inv_ceq,
            (v_ref - r1 * i1 - v) * il1,
            (v_ref - r2 * i2 - v) * il2,
            (v_ref - r3 * i3 - v) * il3,
            (v_ref - r4 * i4 - v) * il4,
            (v_ref - r5 * i5 - w1 - v) * il5,
            (v_ref - r6 * i6 - w2 - v) * il6,
            i5 * ic1,
            i6 * ic2,
        )

    half = 0.5 * dt
    k1 = deriv(x)
    k2 = deriv(tuple(xi + half * ki for xi, ki in zip(x, k1)))
    k3 = deriv(tuple(xi + half * ki for xi, ki in zip(x, k2)))
    k4 = deriv(tuple(xi + dt * ki for xi, ki in zip(x, k3)))
    sixth = dt / 6.0
    return tuple(
        xi + sixth * (a + 2.0 * (b + c) + d)
        for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
    )


def integrate(params: SmgParameters, x0: SmgState,
              input_fn: Callable[[float], ExogenousInput],
              dt: float, duration: float) -> Trajectory:
    """Integrate the microgrid ODE with fixed-step RK4.

    Records floor(duration/dt) + 1 states including the initial one. The
    exogenous input is sampled at each step start and held through the step.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    if duration < 0:
        raise ConfigError("duration must be non-negative")
    n_steps = int(np.floor(duration / dt + 1e-9))
    states = np.empty((n_steps + 1, len(STATE_FIELDS)))
    inputs = np.empty((n_steps + 1, len(INPUT_FIELDS)))

    x = tuple(x0.to_array())
    states[0] = x
    for i in range(n_steps):
        t = i * dt
        u = input_fn(t)
        inputs[i, 0] = u.p_ppl
        inputs[i, 1] = u.p_cpl
        try:
            x = _rk4_step(params, x, u.p_ppl, u.p_cpl, dt)
        except VoltageFloorViolation as exc:
            raise VoltageFloorViolation(exc.v_o, exc.v_floor, time=t) from None
        states[i + 1] = x

    u = input_fn(n_steps * dt)
    inputs[n_steps, 0] = u.p_ppl
    inputs[n_steps, 1] = u.p_cpl
    return Trajectory(dt=dt, t0=0.0, states=states, inputs=inputs)


def downsample(traj: Trajectory, factor: int) -> Trajectory:
    """Keep every factor-th record starting at index 0."""
    if factor < 1 or factor != int(factor):
        raise ConfigError(f"downsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return traj
    return Trajectory(dt=traj.dt * factor, t0=traj.t0,
                      states=traj.states[::factor].copy(),
                      inputs=traj.inputs[::factor].copy())


def steady_state(params: SmgParameters, u: ExogenousInput) -> SmgState:
    """Equilibrium of the microgrid under a constant load, by bisection.

    At equilibrium the supercapacitor currents vanish and their virtual
    capacitors absorb the droop offset, so the bus voltage solves the scalar
    power balance sum_k (v_ref - V)/R_k = (p_cpl + p_ppl)/V over the four
    resistive-droop sources. The high-voltage root is returned.
    """
    p_total = u.p_cpl + u.p_ppl
    v_ref = params.v_ref
    r_droop = (params.r_sga, params.r_sgb, params.r_ba, params.r_bb)
    conductance = sum(1.0 / r for r in r_droop)

    def f(v: float) -> float:
        return conductance * (v_ref - v) - p_total / v

    if p_total == 0.0:
        v_o = v_ref
    elif p_total > 0:
        # f is concave with its maximum at sqrt(p/conductance); bracketing from
        # the maximum isolates the high-voltage root even when both roots lie
        # above the floor.
        v_peak = np.sqrt(p_total / conductance)
        lo = max(params.v_floor, min(v_peak, v_ref))
        if f(lo) < 0:
            raise NoEquilibrium(
                f"load {p_total:.6g} W exceeds deliverable power at v_ref "
                f"{v_ref:.6g} V"
            )
        hi = v_ref
        v_o = _bisect(f, lo, hi)
    else:
        # net negative load (power injection): the bus settles above v_ref
        lo = v_ref
        hi = 2.0 * v_ref
        while f(hi) >= 0:
            hi *= 2.0
        v_o = _bisect(f, lo, hi)

    drop = v_ref - v_o
    return SmgState(
        v_o=v_o,
        i_sga=drop / params.r_sga,
        i_sgb=drop / params.r_sgb,
        i_ba=drop / params.r_ba,
        i_bb=drop / params.r_bb,
        i_sca=0.0,
        i_scb=0.0,
        v_sca=drop,
        v_scb=drop,
    )


def _bisect(f, lo: float, hi: float) -> float:
    # invariant: f(lo) >= 0 > f(hi)
    while hi - lo > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        if f(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
