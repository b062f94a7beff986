"""Pulsed-power-load schedules used to excite the microgrid.

A schedule is a sorted list of non-overlapping rectangular segments; outside
all segments the pulsed load is zero. Segment intervals are half-open,
[start, start + duration), so sample-and-hold evaluation is unambiguous at
the edges.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidRange
from .microgrid import ExogenousInput


@dataclass(frozen=True)
class PulseSegment:
    start: float
    duration: float
    amplitude: float

    @property
    def end(self) -> float:
        return self.start + self.duration


class PulseSchedule:
    """Immutable piecewise-constant pulse waveform."""

    def __init__(self, segments: Sequence[PulseSegment] | Sequence[tuple]):
        segs = [s if isinstance(s, PulseSegment) else PulseSegment(*s) for s in segments]
        segs.sort(key=lambda s: s.start)
        for a, b in zip(segs, segs[1:]):
            if b.start < a.end - 1e-15 * max(1.0, abs(a.end)):
                raise InvalidRange(
                    f"overlapping segments at t={a.start:.6g} and t={b.start:.6g}"
                )
        for s in segs:
            if s.duration < 0:
                raise InvalidRange(f"negative segment duration {s.duration:.6g}")
        self.segments: tuple[PulseSegment, ...] = tuple(segs)
        self._starts = [s.start for s in segs]

    def __len__(self) -> int:
        return len(self.segments)

    def __eq__(self, other) -> bool:
        return isinstance(other, PulseSchedule) and self.segments == other.segments

    def evaluate(self, t: float) -> float:
        """Pulse power at time t; zero outside every segment."""
        i = bisect_right(self._starts, t) - 1
        if i >= 0:
            s = self.segments[i]
            if s.start <= t < s.end:
                return s.amplitude
        return 0.0

    def max_abs_amplitude(self) -> float:
        return max((abs(s.amplitude) for s in self.segments), default=0.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["start", "duration", "amplitude"])
            for s in self.segments:
                writer.writerow([f"{s.start:.17g}", f"{s.duration:.17g}",
                                 f"{s.amplitude:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "PulseSchedule":
        with open(path, "r", newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["start", "duration", "amplitude"]:
                raise InvalidRange(f"unexpected schedule header: {header}")
            return cls([PulseSegment(float(a), float(b), float(c))
                        for a, b, c in reader])


def _check_amp_range(amp_min: float, amp_max: float) -> None:
    if amp_min > amp_max:
        raise InvalidRange(f"amp_min {amp_min:.6g} exceeds amp_max {amp_max:.6g}")


def random_pulse_train(seed: int, duration: float, amp_min: float, amp_max: float,
                       period_range: tuple[float, float],
                       duty_range: tuple[float, float]) -> PulseSchedule:
    """Seeded random train of rectangular pulses covering [0, duration).

    Each cycle draws its period, duty cycle, and amplitude uniformly from the
    given ranges; the pulse occupies the leading duty fraction of the cycle
    and the remainder is zero. The final cycle is clipped at the duration.
    """
    if duration <= 0:
        raise InvalidRange("duration must be positive")
    _check_amp_range(amp_min, amp_max)
    p_lo, p_hi = period_range
    if p_lo <= 0 or p_hi < p_lo:
        raise InvalidRange(f"invalid period range ({p_lo:.6g}, {p_hi:.6g})")
    d_lo, d_hi = duty_range
    if not (0 <= d_lo <= d_hi <= 1):
        raise InvalidRange(f"invalid duty range ({d_lo:.6g}, {d_hi:.6g})")

    rng = np.random.default_rng(seed)
    segments = []
    t = 0.0
    while t < duration:
        period = float(rng.uniform(p_lo, p_hi))
        duty = float(rng.uniform(d_lo, d_hi))
        amplitude = float(rng.uniform(amp_min, amp_max))
        on = min(duty * period, duration - t)
        if on > 0 and amplitude != 0.0:
            segments.append(PulseSegment(t, on, amplitude))
        t += period
    return PulseSchedule(segments)


def minmax_two_pulse(duration: float, amp_min: float, amp_max: float,
                     duties: tuple[float, float]) -> PulseSchedule:
    """Two-pulse excitation: one maximum-amplitude pulse in the first half of
    the window and one minimum-amplitude pulse in the second half, each
    occupying the leading duty fraction of its half."""
    if duration <= 0:
        raise InvalidRange("duration must be positive")
    _check_amp_range(amp_min, amp_max)
    d1, d2 = duties
    if not (0 <= d1 <= 1 and 0 <= d2 <= 1):
        raise InvalidRange(f"duty cycles must lie in [0, 1], got {duties}")
    half = duration / 2.0
    segments = []
    if d1 > 0 and amp_max != 0.0:
        segments.append(PulseSegment(0.0, d1 * half, amp_max))
    if d2 > 0 and amp_min != 0.0:
        segments.append(PulseSegment(half, d2 * half, amp_min))
    return PulseSchedule(segments)


def schedule_input_fn(schedule: PulseSchedule,
                      p_cpl: float) -> Callable[[float], ExogenousInput]:
    """Wrap a schedule as the time->input function the integrator expects."""

    def input_fn(t: float) -> ExogenousInput:
        return ExogenousInput(p_ppl=schedule.evaluate(t), p_cpl=p_cpl)

    return input_fn
