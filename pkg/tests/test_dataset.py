import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smgid.dataset import (
    MODEL_CHANNELS,
    TARGET_CHANNELS,
    NormalizationStats,
    channel_matrix,
    fit_normalizer,
    load_dataset,
    make_windows,
    save_dataset,
    sidecar_path,
)
from smgid.errors import IntegrityError, TrajectoryTooShort
from smgid.simulate import Trajectory

from conftest import synthetic_trajectory


def flat_trajectory(n, values):
    """Trajectory whose nine state columns are all equal to `values`."""
    states = np.tile(np.asarray(values, dtype=float)[:, None], (1, 9))
    inputs = np.zeros((n, 2))
    inputs[:, 0] = values
    return Trajectory(dt=1e-3, t0=0.0, states=states, inputs=inputs)


class TestNormalizer:
    def test_channel_layout(self):
        assert MODEL_CHANNELS == ("v_o", "i_sga", "i_sgb", "i_ba", "i_bb",
                                  "i_sca", "i_scb", "p_ppl")
        assert TARGET_CHANNELS == MODEL_CHANNELS[:7]

    def test_constant_channel_flagged(self):
        traj = flat_trajectory(4, [7.0, 7.0, 7.0, 7.0])
        stats = fit_normalizer(traj)
        assert np.all(stats.mins == 7.0)
        assert np.all(stats.maxs == 7.0)
        assert np.all(stats.constant)
        assert stats.normalize(7.0, "v_o") == 0.0
        assert stats.denormalize(0.0, "v_o") == 7.0

    def test_min_max_values(self):
        traj = flat_trajectory(3, [-1.0, 0.0, 3.0])
        stats = fit_normalizer(traj)
        assert np.all(stats.mins == -1.0)
        assert np.all(stats.maxs == 3.0)

    def test_basic_normalize(self):
        stats = NormalizationStats(mins=np.zeros(8), maxs=np.full(8, 10.0))
        assert stats.normalize(5.0, "v_o") == 0.5
        assert stats.normalize(0.0, "i_sga") == 0.0
        assert stats.normalize(10.0, "p_ppl") == 1.0

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1e8, 1e8), st.floats(-1e8, 1e8), st.floats(0, 1))
    def test_round_trip(self, lo, hi, frac):
        lo, hi = min(lo, hi), max(lo, hi)
        if hi - lo < 1e-6:
            return
        mins = np.full(8, lo)
        maxs = np.full(8, hi)
        stats = NormalizationStats(mins=mins, maxs=maxs)
        x = lo + frac * (hi - lo)
        back = stats.denormalize(stats.normalize(x, "v_o"), "v_o")
        assert abs(back - x) < 1e-12 * (hi - lo)

    def test_train_stats_reused_on_test(self, traj_200):
        stats = fit_normalizer(traj_200)
        other = synthetic_trajectory(150, seed=9)
        ds = make_windows(other, 10, 1, stats)
        assert ds.stats is stats


class TestMakeWindows:
    def test_window_count_small(self, traj_200):
        stats = fit_normalizer(traj_200)
        short = synthetic_trajectory(10)
        ds = make_windows(short, 3, 1, stats)
        assert len(ds) == 7

    def test_single_window_at_full_stride(self):
        traj = synthetic_trajectory(10)
        stats = fit_normalizer(traj)
        ds = make_windows(traj, 3, 10, stats)
        assert len(ds) == 1

    def test_paper_scale_window_count(self):
        # 100 s at 0.5 ms -> 200001 records; L=3000, stride 1 -> 197001
        states = np.zeros((200001, 9))
        states[:, 0] = np.arange(200001, dtype=float)
        traj = Trajectory(dt=0.5e-3, t0=0.0, states=states,
                          inputs=np.zeros((200001, 2)))
        ds = make_windows(traj, 3000, 1, fit_normalizer(traj))
        assert len(ds) == 197001

    def test_window_contents_match_source(self, traj_200):
        stats = fit_normalizer(traj_200)
        ds = make_windows(traj_200, 12, 5, stats)
        mat = channel_matrix(traj_200)
        for i in (0, 1, len(ds) - 1):
            x, y = ds.window(i)
            o = i * 5
            for c, ch in enumerate(MODEL_CHANNELS):
                denorm = stats.denormalize(x[c], ch)
                assert np.allclose(denorm, mat[c, o:o + 12], atol=1e-9)
            target_denorm = stats.denormalize_targets(y)
            assert np.allclose(target_denorm, mat[:7, o + 12], atol=1e-9)

    def test_no_leakage(self, traj_200):
        # the target index never appears inside its own window
        ds = make_windows(traj_200, 12, 5, fit_normalizer(traj_200))
        for i in range(len(ds)):
            o = ds.offsets([i])[0]
            assert o + 12 <= len(traj_200) - 1
            assert o + 12 not in range(o, o + 12)

    def test_training_inputs_in_unit_range(self, traj_200):
        ds = make_windows(traj_200, 12, 1, fit_normalizer(traj_200))
        x, y = ds.get_batch(np.arange(len(ds)))
        assert x.min() >= 0.0 and x.max() <= 1.0
        assert y.min() >= 0.0 and y.max() <= 1.0

    def test_too_short(self, traj_200):
        with pytest.raises(TrajectoryTooShort):
            make_windows(traj_200, 200, 1, fit_normalizer(traj_200))

    def test_target_times(self, traj_200):
        ds = make_windows(traj_200, 10, 4, fit_normalizer(traj_200))
        times = ds.target_times([0, 1])
        assert times[0] == pytest.approx(traj_200.t0 + 10 * traj_200.dt)
        assert times[1] == pytest.approx(traj_200.t0 + 14 * traj_200.dt)


class TestContainer:
    def test_round_trip(self, tmp_path, traj_200):
        stats = fit_normalizer(traj_200)
        ds = make_windows(traj_200, 16, 3, stats)
        path = tmp_path / "windows.bin"
        sidecar = save_dataset(ds, path, source_path="traj.csv",
                               source_sha256="abc")
        assert sidecar["num_windows"] == len(ds)
        back = load_dataset(path)
        assert len(back) == len(ds)
        assert back.history_length == 16
        assert back.stride == 3
        x0, y0 = ds.get_batch(np.arange(len(ds)))
        x1, y1 = back.get_batch(np.arange(len(back)))
        assert np.array_equal(x0, x1)
        assert np.array_equal(y0, y1)
        assert np.array_equal(back.stats.mins, stats.mins)
        assert back.dt == pytest.approx(ds.dt)

    def test_tamper_detection(self, tmp_path, traj_200):
        ds = make_windows(traj_200, 16, 3, fit_normalizer(traj_200))
        path = tmp_path / "windows.bin"
        save_dataset(ds, path)
        raw = bytearray(path.read_bytes())
        raw[100] ^= 0xFF
        path.write_bytes(raw)
        with pytest.raises(IntegrityError):
            load_dataset(path)
        # verification can be skipped explicitly
        load_dataset(path, verify=False)

    def test_sidecar_path_convention(self):
        assert sidecar_path("x/data.bin") == "x/data.bin.json"

    def test_write_is_deterministic(self, tmp_path, traj_200):
        ds = make_windows(traj_200, 16, 3, fit_normalizer(traj_200))
        p1 = tmp_path / "a.bin"
        p2 = tmp_path / "b.bin"
        save_dataset(ds, p1)
        save_dataset(ds, p2)
        assert p1.read_bytes() == p2.read_bytes()
        assert (tmp_path / "a.bin.json").read_text() == \
            (tmp_path / "b.bin.json").read_text()
