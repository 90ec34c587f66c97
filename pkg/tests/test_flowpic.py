import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowpiclab.dataio import PacketSeries
from flowpiclab.flowpic import (
    Flowpic,
    build_flowpic,
    export_csv,
    export_pgm,
    to_model_input,
)

from conftest import random_series


def oracle_flowpic(series, resolution, window):
    """Naive per-packet double loop over bin edges."""
    counts = np.zeros((resolution, resolution), dtype=np.int64)
    t_edges = [window * i / resolution for i in range(resolution + 1)]
    s_edges = [1500 * i / resolution for i in range(resolution + 1)]
    for t, s in zip(series.timestamps, series.sizes):
        if not 0 <= t < window:
            continue
        for r in range(resolution):
            if s_edges[r] <= s < s_edges[r + 1] or (r == resolution - 1 and s == 1500):
                break
        for c in range(resolution):
            if t_edges[c] <= t < t_edges[c + 1]:
                break
        counts[r, c] += 1
    return counts


class TestBuildFlowpic:
    def test_empty_series(self):
        fp = build_flowpic(PacketSeries([], []), 32, 15.0)
        assert fp.counts.shape == (32, 32)
        assert fp.counts.sum() == 0

    def test_single_packet_first_bin(self):
        fp = build_flowpic(PacketSeries([0.0], [1]), 32, 15.0)
        assert fp.counts[0, 0] == 1
        assert fp.counts.sum() == 1

    def test_max_size_last_row(self):
        fp = build_flowpic(PacketSeries([0.0], [1500]), 32, 15.0)
        assert fp.counts[31, 0] == 1

    def test_matches_oracle_on_random_series(self):
        rng = np.random.default_rng(1)
        series = random_series(rng, n=50)
        fp = build_flowpic(series, 32, 15.0)
        assert np.array_equal(fp.counts, oracle_flowpic(series, 32, 15.0))

    def test_packets_past_window_ignored(self):
        fp = build_flowpic(PacketSeries([0.0, 14.9, 15.0, 20.0],
                                        [100, 100, 100, 100]), 32, 15.0)
        assert fp.counts.sum() == 2

    def test_bad_args(self):
        with pytest.raises(ValueError):
            build_flowpic(PacketSeries([0.0], [1]), 1, 15.0)
        with pytest.raises(ValueError):
            build_flowpic(PacketSeries([0.0], [1]), 32, 0.0)


class TestProperties:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 120))
    def test_mass_conservation(self, seed, n):
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, 20, n)  # some packets past the window
        t.sort()
        t -= t[0]
        series = PacketSeries(t, rng.integers(1, 1501, n))
        fp = build_flowpic(series, 32, 15.0)
        in_window = int(np.count_nonzero((t >= 0) & (t < 15.0)))
        assert fp.counts.sum() == in_window

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_resolution_refinement(self, seed):
        rng = np.random.default_rng(seed)
        series = random_series(rng, n=80)
        fine = build_flowpic(series, 64, 15.0).counts
        coarse = build_flowpic(series, 32, 15.0).counts
        downsampled = fine.reshape(32, 2, 32, 2).sum(axis=(1, 3))
        assert np.array_equal(downsampled, coarse)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        series = random_series(rng, n=60)
        perm = rng.permutation(len(series))
        shuffled = PacketSeries.__new__(PacketSeries)
        object.__setattr__(shuffled, "timestamps", series.timestamps[perm])
        object.__setattr__(shuffled, "sizes", series.sizes[perm])
        object.__setattr__(shuffled, "directions", None)
        a = build_flowpic(series, 32, 15.0).counts
        b = build_flowpic(shuffled, 32, 15.0).counts
        assert np.array_equal(a, b)


class TestModelInput:
    def test_unit_max_zero_matrix(self):
        fp = Flowpic(32, 15.0, np.zeros((32, 32), dtype=np.int64))
        out = to_model_input(fp, "unit_max")
        assert np.all(out == 0)

    def test_unit_max_scaling(self):
        counts = np.array([[0, 2], [4, 0]], dtype=np.int64)
        fp = Flowpic(2, 15.0, counts)
        out = to_model_input(fp, "unit_max")
        assert out.tolist() == [[0.0, 0.5], [1.0, 0.0]]

    def test_raw_identity(self):
        rng = np.random.default_rng(0)
        counts = rng.integers(0, 9, (32, 32))
        fp = Flowpic(32, 15.0, counts)
        assert np.array_equal(to_model_input(fp, "raw"), counts)

    def test_unknown_normalization(self):
        fp = Flowpic(2, 15.0, np.zeros((2, 2), dtype=np.int64))
        with pytest.raises(ValueError):
            to_model_input(fp, "log")


class TestExports:
    def test_csv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        fp = build_flowpic(random_series(rng), 32, 15.0)
        path = tmp_path / "fp.csv"
        export_csv(fp, path)
        loaded = np.loadtxt(path, delimiter=",", dtype=np.int64)
        assert np.array_equal(loaded, fp.counts)

    def test_pgm_header(self, tmp_path):
        rng = np.random.default_rng(3)
        fp = build_flowpic(random_series(rng), 32, 15.0)
        path = tmp_path / "fp.pgm"
        export_pgm(fp, path)
        data = path.read_bytes()
        assert data.startswith(b"P5\n32 32\n255\n")
        assert len(data) == len(b"P5\n32 32\n255\n") + 32 * 32
