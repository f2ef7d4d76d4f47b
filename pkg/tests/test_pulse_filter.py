from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulselock.errors import InvalidInputError
from pulselock.pulse_filter import (
    DetectorParams,
    FilterMode,
    FilterState,
    interpolate_window,
    is_pulse_width,
    pollution_ratio,
    process_block,
    process_stream_block,
)
from pulselock.scenario import paper_default_scenario
from pulselock.waveform import SampleSeries

from pulselock.combiner import simulate_open_loop


class TestPollutionRatio:
    def test_smooth_triple(self):
        assert pollution_ratio(1.0, 1.1, 1.2, 1e-6) == pytest.approx(1.0)

    def test_jump_ahead(self):
        assert pollution_ratio(0.10, 0.12, 5.00, 1e-6) == pytest.approx(244.0)

    def test_locally_constant_is_clean(self):
        assert pollution_ratio(1.0, 1.0, 1.0, 1e-6) == 0.0

    def test_flat_then_jump_is_sentinel(self):
        assert pollution_ratio(1.0, 1.0, 9.0, 1e-6) == math.inf

    def test_non_positive_eps_rejected(self):
        with pytest.raises(InvalidInputError):
            pollution_ratio(0.0, 1.0, 2.0, 0.0)

    def test_matches_direct_formula(self):
        # oracle: the textbook expression, evaluated wherever the
        # denominator guard is inactive; agreement must be exact
        rng = np.random.default_rng(42)
        eps = 1e-6
        checked = 0
        for _ in range(10_000):
            y_prev, y, y_next = rng.uniform(-5, 5, size=3)
            if abs(y - y_prev) < eps:
                continue
            checked += 1
            assert pollution_ratio(y_prev, y, y_next, eps) == abs(
                (y - y_next) / (y - y_prev)
            )
        assert checked > 9_000


class TestIsPulseWidth:
    def test_single_point_regime(self):
        assert is_pulse_width([0.1, 4.8, 0.1], 2.0, 1) is True

    def test_isolated_point_is_noise(self):
        assert is_pulse_width([0.1, 4.8, 0.1, 0.1], 2.0, 3) is False

    def test_consecutive_run_is_pulse(self):
        assert is_pulse_width([0.1, 4.8, 4.9, 4.7, 0.1], 2.0, 3) is True

    def test_short_slice_rejected(self):
        with pytest.raises(InvalidInputError):
            is_pulse_width([0.1, 4.8], 2.0, 3)


class TestInterpolateWindow:
    def series(self, values):
        return SampleSeries(1e6, 0.0, np.asarray(values, dtype=float))

    def test_constant_fill(self):
        s = self.series([0.5, 9.0, 9.0, 0.5])
        out = interpolate_window(s, 1, 2)
        assert np.allclose(out.samples, [0.5, 0.5, 0.5, 0.5])

    def test_linear_fill(self):
        s = self.series([0.0, 7.0, 7.0, 7.0, 1.0])
        out = interpolate_window(s, 1, 3)
        assert np.allclose(out.samples, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_left_boundary_holds_right_neighbour(self):
        s = self.series([9.0, 9.0, 0.7, 0.1])
        out = interpolate_window(s, 0, 1)
        assert np.allclose(out.samples, [0.7, 0.7, 0.7, 0.1])

    def test_right_boundary_holds_left_neighbour(self):
        s = self.series([0.1, 0.3, 9.0, 9.0])
        out = interpolate_window(s, 2, 3)
        assert np.allclose(out.samples, [0.1, 0.3, 0.3, 0.3])

    def test_untouched_samples_bit_identical(self):
        rng = np.random.default_rng(3)
        s = self.series(rng.uniform(size=50))
        out = interpolate_window(s, 10, 14)
        assert np.array_equal(out.samples[:10], s.samples[:10])
        assert np.array_equal(out.samples[15:], s.samples[15:])

    def test_whole_series_window_rejected(self):
        with pytest.raises(InvalidInputError):
            interpolate_window(self.series([1.0, 2.0]), 0, 1)

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidInputError):
            interpolate_window(self.series([1.0, 2.0]), 1, 2)


def hand_params(**overrides) -> DetectorParams:
    defaults = dict(
        period_samples=50,
        window_width_samples=3,
        ratio_threshold=2.0,
        v_threshold=50.0,
        min_pulse_samples=1,
        confirm_count=5,
        miss_limit=3,
    )
    defaults.update(overrides)
    return DetectorParams(**defaults)


def pulsed_block(pulse_indices, n=1200, baseline=1.0, height=100.0):
    x = np.full(n, baseline)
    for i in pulse_indices:
        x[i] = height
    return SampleSeries(1e6, 0.0, x)


class TestProcessBlock:
    def test_pulse_free_block_is_identity(self):
        rng = np.random.default_rng(7)
        x = 1.0 + 0.01 * rng.standard_normal(2000)
        series = SampleSeries(1e6, 0.0, x)
        state = FilterState(params=hand_params(period_samples=500))
        filtered, state2, report = process_block(series, state)
        assert np.array_equal(filtered.samples, series.samples)
        assert state2.mode is FilterMode.ACQUIRE
        assert report.replaced_ranges == []
        assert report.detection_latency_s is None
        assert report.reacquisitions == 0

    def test_block_too_short_rejected(self):
        series = SampleSeries(1e6, 0.0, np.zeros(99))
        with pytest.raises(InvalidInputError):
            process_block(series, FilterState(params=hand_params()))

    def test_acquire_then_confirm_then_track(self):
        # pulses every 50 samples starting at 10; window 3 wide; the block
        # ends before the next predicted window so exactly ten windows fire
        pulses = [10 + 50 * k for k in range(10)]
        series = pulsed_block(pulses, n=505)
        state = FilterState(params=hand_params())
        filtered, st2, report = process_block(series, state)
        # first window is interpolated immediately on acquisition
        assert report.replaced_ranges[0] == (9, 11)
        assert report.detection_latency_s == pytest.approx(9e-6)
        # five confirmations then TRACK
        assert st2.mode is FilterMode.TRACK
        assert np.all(filtered.samples < 50.0)
        # windows centred on each pulse
        assert [r for r in report.replaced_ranges] == [
            (10 + 50 * k - 1, 10 + 50 * k + 1) for k in range(10)
        ]

    def test_reacquisition_after_pulse_shift(self):
        # hand-built trace: 10 clean periods, then the train shifts by
        # three window widths (+9 samples).  Expected walk-through:
        #   pulses 0..9   acquired at 10, confirmed at 60..260, tracked on
        #   pulses 10,11  miss the predicted windows (misses 1, 2): the
        #                 shifted pulses at 519 and 569 escape unfiltered
        #   pulse 12      third miss at 610 re-enters ACQUIRE, and the
        #                 scan catches the shifted pulse at 619 directly
        #   pulses 13..   confirmed on the new grid, tracking resumes
        pulses = [10 + 50 * k for k in range(10)] + [
            19 + 50 * k for k in range(10, 24)
        ]
        series = pulsed_block(pulses, n=1200)
        state = FilterState(params=hand_params())
        filtered, st2, report = process_block(series, state)
        assert report.reacquisitions == 1
        assert st2.mode is FilterMode.TRACK
        replaced = set()
        for lo, hi in report.replaced_ranges:
            replaced.update(range(lo, hi + 1))
        for p in pulses:
            if p in (519, 569):  # the acquisition gap
                assert p not in replaced
                assert filtered.samples[p] == 100.0
            else:
                assert p in replaced
                assert filtered.samples[p] < 50.0
        # the three missed windows around 510, 560, 610 were interpolated
        assert (509, 511) in report.replaced_ranges
        assert (559, 561) in report.replaced_ranges
        assert (609, 611) in report.replaced_ranges

    def test_confirm_miss_falls_back_to_acquire(self):
        # one pulse, then silence: the lone candidate never confirms
        series = pulsed_block([10], n=200)
        state = FilterState(params=hand_params())
        _, st2, report = process_block(series, state)
        assert st2.mode is FilterMode.ACQUIRE
        assert report.replaced_ranges == [(9, 11)]
        assert report.reacquisitions == 0

    def test_track_reachable_only_after_five_confirms(self):
        pulses = [10 + 50 * k for k in range(6)]
        series = pulsed_block(pulses, n=290)
        state = FilterState(params=hand_params())
        _, st2, _ = process_block(series, state)
        # acquisition plus windows at 60..260: five confirmations
        assert st2.confirmations == 5
        assert st2.mode is FilterMode.TRACK

    def test_streaming_blocks_match_single_call(self):
        # feeding the same stream in sub-period chunks must reproduce the
        # one-shot result (modulo nothing: windows here stay mid-block)
        pulses = [10 + 50 * k for k in range(20)]
        series = pulsed_block(pulses, n=1000)
        one, _, rep_one = process_block(series, FilterState(params=hand_params()))
        state = FilterState(params=hand_params())
        parts = []
        merged = None
        for k in range(0, 1000, 25):
            chunk = SampleSeries(1e6, k / 1e6, series.samples[k : k + 25])
            out, state, rep = process_stream_block(chunk, state)
            parts.append(out.samples)
            merged = rep if merged is None else merged.merge(rep)
        assert np.array_equal(np.concatenate(parts), one.samples)
        assert merged.replaced_ranges == rep_one.replaced_ranges
        assert merged.detection_latency_s == rep_one.detection_latency_s

    def test_stream_discontinuity_rejected(self):
        state = FilterState(params=hand_params())
        a = SampleSeries(1e6, 0.0, np.ones(100))
        _, state, _ = process_stream_block(a, state)
        bad = SampleSeries(1e6, 5.0, np.ones(100))
        with pytest.raises(InvalidInputError):
            process_stream_block(bad, state)

    def test_determinism(self):
        sc = paper_default_scenario(seed=5, with_controller=False)
        trace = simulate_open_loop(sc)
        out1, st1, rep1 = process_block(trace, FilterState(params=sc.filter))
        out2, st2, rep2 = process_block(trace, FilterState(params=sc.filter))
        assert np.array_equal(out1.samples, out2.samples)
        assert rep1.replaced_ranges == rep2.replaced_ranges
        assert st1.mode is st2.mode

    def test_replacement_budget(self):
        sc = paper_default_scenario(seed=2, with_controller=False)
        trace = simulate_open_loop(sc)
        _, _, report = process_block(trace, FilterState(params=sc.filter))
        total = sum(hi - lo + 1 for lo, hi in report.replaced_ranges)
        windows = len(report.replaced_ranges)
        assert total <= windows * sc.filter.window_width_samples
        # stock geometry: at most one sample replaced per thousand
        assert total <= len(trace) / sc.filter.period_samples + 1

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=25, deadline=None)
    def test_identity_outside_reported_windows(self, seed):
        rng = np.random.default_rng(seed)
        x = 1.0 + 0.3 * np.sin(np.linspace(0, 20, 2500)) + 0.02 * rng.standard_normal(2500)
        pulses = rng.choice(np.arange(100, 2400), size=3, replace=False)
        x[pulses] += rng.uniform(50, 150, size=3)
        series = SampleSeries(1e6, 0.0, x)
        params = hand_params(period_samples=1000, v_threshold=None)
        filtered, _, report = process_block(series, FilterState(params=params))
        mask = np.ones(x.size, dtype=bool)
        for lo, hi in report.replaced_ranges:
            mask[lo : hi + 1] = False
        assert np.array_equal(filtered.samples[mask], series.samples[mask])

    def test_mode_always_valid_and_counters_bounded(self):
        sc = paper_default_scenario(seed=9, with_controller=False)
        trace = simulate_open_loop(sc)
        state = FilterState(params=sc.filter)
        for k in range(0, len(trace), 500):
            chunk = SampleSeries(
                trace.sample_rate_hz,
                k / trace.sample_rate_hz,
                trace.samples[k : k + 500],
            )
            _, state, _ = process_stream_block(chunk, state)
            assert state.mode in (FilterMode.ACQUIRE, FilterMode.CONFIRM, FilterMode.TRACK)
            assert 0 <= state.confirmations <= state.params.confirm_count
            assert 0 <= state.misses <= state.params.miss_limit


class TestDetectorParams:
    def test_stock_derivation(self):
        p = DetectorParams.for_pulse_train(
            f_rep_hz=10e3, broadened_width_s=10e-9, sample_rate_hz=10e6,
            window_width_s=100e-9,
        )
        assert p.period_samples == 1000
        assert p.window_width_samples == 1  # 100 ns at 10 MHz
        assert p.min_pulse_samples == 1  # max(1, floor(0.9 * 0.1))
        assert p.confirm_count == 5
        assert p.miss_limit == 3

    def test_broadened_pulse_derivation(self):
        p = DetectorParams.for_pulse_train(
            f_rep_hz=10e3, broadened_width_s=3e-7, sample_rate_hz=10e6,
        )
        assert p.min_pulse_samples == 2  # floor(0.9 * 3)
        assert p.window_width_samples == 30

    def test_invalid_geometry_rejected(self):
        with pytest.raises(InvalidInputError):
            DetectorParams(period_samples=10, window_width_samples=10)
        with pytest.raises(InvalidInputError):
            DetectorParams(period_samples=100, window_width_samples=2,
                           min_pulse_samples=5)
        with pytest.raises(InvalidInputError):
            DetectorParams(period_samples=100, width_fraction=0.5)
