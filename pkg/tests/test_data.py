import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import tiny_config
from mtnet.data import (RawSeries, Scaler, SplitSpec, add_calendar_features,
                        chronological_split, fit_scaler, load_matrix, make_samples)
from mtnet.errors import ConfigError, DataError


class TestLoadMatrix:
    def test_small_comma_file(self, tmp_path):
        f = tmp_path / "series.csv"
        f.write_text("1,2\n3,4\n5,6\n")
        series = load_matrix(f)
        assert series.D == 2
        assert series.T_total == 3
        np.testing.assert_array_equal(series.values, [[1, 3, 5], [2, 4, 6]])

    def test_tab_autodetect(self, tmp_path):
        f = tmp_path / "series.tsv"
        f.write_text("1\t2\n3\t4\n")
        assert load_matrix(f).D == 2

    def test_empty_file(self, tmp_path):
        f = tmp_path / "empty.csv"
        f.write_text("")
        with pytest.raises(DataError):
            load_matrix(f)

    def test_ragged_rows_report_line(self, tmp_path):
        f = tmp_path / "ragged.csv"
        f.write_text("1,2\n3,4,5\n")
        with pytest.raises(DataError, match=":2"):
            load_matrix(f)

    def test_non_numeric_reports_coordinates(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("1,2\n3,oops\n")
        with pytest.raises(DataError, match=r":2.*column 1"):
            load_matrix(f)

    def test_missing_rejected_by_default(self, tmp_path):
        f = tmp_path / "gaps.csv"
        f.write_text("1,2\nNA,4\n")
        with pytest.raises(DataError, match="missing"):
            load_matrix(f)

    def test_forward_fill(self, tmp_path):
        f = tmp_path / "gaps.csv"
        f.write_text("1,2\nNA,4\n5,NA\n")
        series = load_matrix(f, forward_fill=True)
        np.testing.assert_array_equal(series.values, [[1, 1, 5], [2, 4, 4]])

    def test_leading_missing_cannot_fill(self, tmp_path):
        f = tmp_path / "gaps.csv"
        f.write_text("NA,2\n3,4\n")
        with pytest.raises(DataError):
            load_matrix(f, forward_fill=True)

    def test_header_names(self, tmp_path):
        f = tmp_path / "named.csv"
        f.write_text("load,price\n1,2\n3,4\n")
        series = load_matrix(f, header=True)
        assert series.variable_names == ["load", "price"]
        assert series.T_total == 2


class TestScaler:
    def test_constant_variable(self):
        values = np.array([[5.0, 5.0, 5.0], [0.0, 1.0, 2.0]])
        scaler = fit_scaler(values)
        assert scaler.shift[0] == 5.0 and scaler.scale[0] == 1.0
        np.testing.assert_array_equal(scaler.apply(values)[0], np.zeros(3))

    def test_zero_to_ten_maps_to_unit(self):
        scaler = fit_scaler(np.array([[0.0, 10.0]]))
        np.testing.assert_allclose(scaler.apply(np.array([[0.0, 10.0, 5.0]])),
                                   [[0.0, 1.0, 0.5]], atol=1e-15)

    def test_empty_slice(self):
        with pytest.raises(DataError):
            fit_scaler(np.zeros((2, 0)))

    @given(st.integers(1, 5), st.integers(2, 30), st.integers(0, 2 ** 31))
    @settings(max_examples=60, deadline=None)
    def test_round_trip(self, d, t, seed):
        values = np.random.default_rng(seed).standard_normal((d, t)) * 100
        scaler = fit_scaler(values)
        np.testing.assert_allclose(scaler.invert(scaler.apply(values)), values,
                                   atol=1e-10)

    def test_fit_ignores_later_partitions(self):
        rng = np.random.default_rng(0)
        series = rng.standard_normal((3, 100))
        (a, b), _, _ = chronological_split(100)
        first = fit_scaler(series[:, a:b])
        tampered = series.copy()
        tampered[:, b:] = rng.standard_normal((3, 100 - b)) * 1e6
        second = fit_scaler(tampered[:, a:b])
        np.testing.assert_array_equal(first.shift, second.shift)
        np.testing.assert_array_equal(first.scale, second.scale)


class TestChronologicalSplit:
    def test_ten_steps(self):
        assert chronological_split(10) == ((0, 6), (6, 8), (8, 10))

    def test_benchmark_sizes(self):
        train, valid, test = chronological_split(7588)
        assert train[1] - train[0] == 4552
        assert valid[1] - valid[0] == 1518
        assert test[1] - test[0] == 1518

    def test_all_train(self):
        assert chronological_split(10, SplitSpec(1.0, 0.0, 0.0)) == ((0, 10), (10, 10), (10, 10))

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            SplitSpec(0.5, 0.2, 0.2)


class TestMakeSamples:
    def cfg(self, **kw):
        base = dict(n=2, T=24, h=3, D=1, targets=(0,), s_ar=4, w=2, d_c=2, d=2)
        base.update(kw)
        return tiny_config(**base)

    def test_counting_oracle(self):
        # First eligible target needs (n+1)*T + h - 1 earlier steps.
        cfg = self.cfg()
        series = np.arange(200, dtype=float).reshape(1, 200)
        samples = make_samples(series, cfg)
        assert samples[0].target_time == 2 * 24 + 24 + 3 - 1 == 74
        assert len(samples) == 200 - 74 == 126

    def test_short_range_empty(self):
        cfg = self.cfg()
        series = np.zeros((1, (3 * 24 + 3) - 1))
        assert make_samples(series, cfg) == []

    def test_stride_one_ordering(self):
        cfg = self.cfg(T=4, n=2, h=1)
        series = np.arange(40, dtype=float).reshape(1, 40)
        samples = make_samples(series, cfg)
        times = [s.target_time for s in samples]
        assert times == list(range(times[0], 40))

    def test_tiling_and_no_leak(self):
        cfg = self.cfg(T=5, n=3, h=2)
        series = np.arange(80, dtype=float).reshape(1, 80)
        for sample in make_samples(series, cfg):
            t = sample.target_time
            covered = []
            for start, end in sample.block_time_ranges:
                covered.extend(range(start, end + 1))
            qs, qe = sample.query_time_range
            covered.extend(range(qs, qe + 1))
            expected = list(range(t - 2 - 4 * 5 + 1, t - 2 + 1))
            assert covered == expected          # exact tiling, no gaps or overlaps
            assert max(covered) == t - cfg.h    # nothing newer than t - h

    def test_values_align_with_times(self):
        cfg = self.cfg(T=4, n=2, h=1, D=2, targets=(1,))
        series = np.stack([np.arange(60.0), np.arange(60.0) * 10])
        sample = make_samples(series, cfg)[0]
        t = sample.target_time
        np.testing.assert_array_equal(sample.target, [t * 10.0])
        qs, qe = sample.query_time_range
        np.testing.assert_array_equal(sample.query[0], np.arange(qs, qe + 1, dtype=float))
        for (s, e), block in zip(sample.block_time_ranges, sample.blocks):
            np.testing.assert_array_equal(block[0], np.arange(s, e + 1, dtype=float))

    def test_range_restricts_targets_not_inputs(self):
        cfg = self.cfg(T=4, n=2, h=1)
        series = np.arange(60, dtype=float).reshape(1, 60)
        samples = make_samples(series, cfg, (40, 50))
        assert [s.target_time for s in samples] == list(range(40, 50))
        # inputs reach back before the range start
        assert samples[0].block_time_ranges[0][0] < 40


class TestCalendarFeatures:
    def test_appends_three_scaled_columns(self):
        series = RawSeries(values=np.zeros((2, 48)))
        out = add_calendar_features(series, steps_per_day=24)
        assert out.D == 5
        hours = out.values[2]
        assert hours[0] == 0.0 and hours[23] == 1.0 and hours[24] == 0.0
        assert np.all((out.values[2:] >= 0.0) & (out.values[2:] <= 1.0))

    def test_week_cycle(self):
        series = RawSeries(values=np.zeros((1, 24 * 8)))
        out = add_calendar_features(series, steps_per_day=24)
        day_of_week = out.values[2]  # rows: original, hour, day-of-week, day-of-year
        assert day_of_week[0] == 0.0
        assert day_of_week[24 * 7] == 0.0  # wraps after seven days
