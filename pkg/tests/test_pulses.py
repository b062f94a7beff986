import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smgid.errors import InvalidRange
from smgid.pulses import (
    PulseSchedule,
    PulseSegment,
    minmax_two_pulse,
    random_pulse_train,
    schedule_input_fn,
)


class TestRandomPulseTrain:
    def test_zero_duty_gives_empty_schedule(self):
        sched = random_pulse_train(1, 10.0, -5e6, 5e6, (0.5, 2.0), (0.0, 0.0))
        assert len(sched) == 0
        assert sched.evaluate(3.0) == 0.0

    def test_same_seed_is_deterministic(self):
        a = random_pulse_train(42, 10.0, -5e6, 5e6, (0.5, 2.0), (0.2, 0.8))
        b = random_pulse_train(42, 10.0, -5e6, 5e6, (0.5, 2.0), (0.2, 0.8))
        assert a == b

    def test_generated_segments_respect_ranges(self):
        sched = random_pulse_train(42, 10.0, -5e6, 5e6, (0.5, 2.0), (0.2, 0.8))
        assert len(sched) > 0
        starts = [s.start for s in sched.segments]
        for seg in sched.segments:
            assert -5e6 <= seg.amplitude <= 5e6
            assert seg.duration <= 0.8 * 2.0 + 1e-12
        # with a strictly positive duty floor every cycle emits one segment,
        # so consecutive starts are separated by exactly one period
        gaps = np.diff(starts)
        assert np.all(gaps >= 0.5 - 1e-12)
        assert np.all(gaps <= 2.0 + 1e-12)

    def test_invalid_ranges(self):
        with pytest.raises(InvalidRange):
            random_pulse_train(0, 10.0, 5e6, -5e6, (0.5, 2.0), (0.2, 0.8))
        with pytest.raises(InvalidRange):
            random_pulse_train(0, 10.0, -5e6, 5e6, (2.0, 0.5), (0.2, 0.8))
        with pytest.raises(InvalidRange):
            random_pulse_train(0, 10.0, -5e6, 5e6, (0.5, 2.0), (0.9, 0.2))
        with pytest.raises(InvalidRange):
            random_pulse_train(0, -1.0, -5e6, 5e6, (0.5, 2.0), (0.2, 0.8))


class TestMinmaxTwoPulse:
    def test_zero_duties(self):
        assert len(minmax_two_pulse(50.0, -5e6, 5e6, (0.0, 0.0))) == 0

    def test_segment_arithmetic(self):
        sched = minmax_two_pulse(50.0, -5e6, 5e6, (0.5, 0.5))
        assert sched.segments == (PulseSegment(0.0, 12.5, 5e6),
                                  PulseSegment(25.0, 12.5, -5e6))
        assert sched.evaluate(6.0) == 5e6
        assert sched.evaluate(12.5) == 0.0
        assert sched.evaluate(30.0) == -5e6
        assert sched.evaluate(40.0) == 0.0

    def test_zero_amplitudes(self):
        assert len(minmax_two_pulse(50.0, 0.0, 0.0, (0.5, 0.5))) == 0

    def test_invalid(self):
        with pytest.raises(InvalidRange):
            minmax_two_pulse(-1.0, -5e6, 5e6, (0.5, 0.5))
        with pytest.raises(InvalidRange):
            minmax_two_pulse(50.0, -5e6, 5e6, (1.5, 0.5))


class TestEvaluate:
    def test_inside_segment(self):
        sched = PulseSchedule([PulseSegment(1.0, 0.5, 5e6)])
        assert sched.evaluate(1.2) == 5e6

    def test_half_open_boundary(self):
        sched = PulseSchedule([PulseSegment(1.0, 0.5, 5e6)])
        assert sched.evaluate(1.0) == 5e6
        assert sched.evaluate(1.5) == 0.0

    def test_empty(self):
        assert PulseSchedule([]).evaluate(12.3) == 0.0

    def test_overlap_rejected(self):
        with pytest.raises(InvalidRange):
            PulseSchedule([PulseSegment(0.0, 2.0, 1.0),
                           PulseSegment(1.0, 2.0, 1.0)])

    def test_integral_identity(self):
        sched = random_pulse_train(7, 10.0, -5e6, 5e6, (0.5, 2.0), (0.2, 0.8))
        expected = sum(s.duration * abs(s.amplitude) for s in sched.segments)
        grid = np.arange(0.0, 10.0, 5e-4)
        numeric = sum(abs(sched.evaluate(t)) for t in grid) * 5e-4
        assert numeric == pytest.approx(expected, rel=2e-2)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 100), st.floats(0.001, 5.0),
                          st.floats(-5e6, 5e6)),
                min_size=0, max_size=12),
       st.floats(0, 120))
def test_evaluate_never_exceeds_amplitude_bound(raw_segments, t):
    # lay segments end to end so they never overlap
    segments = []
    cursor = 0.0
    for gap, duration, amplitude in raw_segments:
        cursor += gap
        segments.append(PulseSegment(cursor, duration, amplitude))
        cursor += duration
    sched = PulseSchedule(segments)
    assert abs(sched.evaluate(t)) <= sched.max_abs_amplitude()


class TestIo:
    def test_csv_round_trip(self, tmp_path):
        sched = random_pulse_train(3, 5.0, -5e6, 5e6, (0.5, 1.5), (0.1, 0.9))
        path = tmp_path / "sched.csv"
        sched.to_csv(path)
        assert PulseSchedule.from_csv(path) == sched

    def test_input_fn_wraps_schedule(self):
        sched = PulseSchedule([PulseSegment(0.5, 1.0, 2e6)])
        fn = schedule_input_fn(sched, 9e6)
        u = fn(1.0)
        assert u.p_ppl == 2e6
        assert u.p_cpl == 9e6
        assert fn(2.0).p_ppl == 0.0
