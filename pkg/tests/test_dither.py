from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import j1

from pulselock.dither import (
    ControllerState,
    DitherConfig,
    DitherTone,
    controller_step,
    demodulate_error,
    dither_phase,
    final_intensity_ratio,
    lock_time_s,
    pulse_peak_ratios,
    run_closed_loop,
    wrap_phase,
)
from pulselock.errors import InvalidInputError
from pulselock.scenario import paper_default_scenario
from pulselock.waveform import SampleSeries

FS = 10e6
PERIOD = 5e-5
FREQ = 200e3
AMP = 0.2


def stock_config(**overrides) -> DitherConfig:
    kwargs = dict(
        tones=[DitherTone(0.0, 0.0), DitherTone(FREQ, AMP)],
        integration_period_s=PERIOD,
        gain=2.2,
        reference_beam=0,
    )
    kwargs.update(overrides)
    return DitherConfig(**kwargs)


def cw_block(dphi: float, config: DitherConfig = None, freq: float = FREQ) -> SampleSeries:
    config = config or stock_config()
    t = np.arange(round(config.integration_period_s * FS)) / FS
    x = 2.0 + 2.0 * np.cos(dphi + AMP * np.sin(2 * np.pi * freq * t))
    return SampleSeries(FS, 0.0, x)


def lockin_oracle(dphi: float, freq: float = FREQ, amp: float = AMP) -> float:
    """Numerical quadrature of the interference expression, negated to the
    leading-beam-positive convention; independent of the sampled path."""
    val, _ = quad(
        lambda t: (2.0 + 2.0 * np.cos(dphi + amp * np.sin(2 * np.pi * freq * t)))
        * np.sin(2 * np.pi * freq * t),
        0.0,
        PERIOD,
        limit=1000,
    )
    return -(2.0 / PERIOD) * val


class TestWrapPhase:
    def test_identity_in_range(self):
        assert wrap_phase(0.5) == pytest.approx(0.5)
        assert wrap_phase(np.pi) == pytest.approx(np.pi)

    def test_wraps_past_pi(self):
        assert wrap_phase(np.pi + 0.05) == pytest.approx(-np.pi + 0.05)
        assert wrap_phase(-np.pi - 0.05) == pytest.approx(np.pi - 0.05)

    def test_far_wrap(self):
        assert wrap_phase(7 * np.pi + 0.1) == pytest.approx(-np.pi + 0.1)


class TestDitherPhase:
    def test_zero_at_t0(self):
        assert dither_phase(stock_config(), 1, 0.0) == 0.0

    def test_reference_beam_always_zero(self):
        cfg = stock_config()
        for t in np.linspace(0, 1e-3, 17):
            assert dither_phase(cfg, 0, t) == 0.0

    def test_amplitude_bound(self):
        cfg = stock_config()
        t = np.linspace(0.0, 1.0 / FREQ, 100_001)
        values = [dither_phase(cfg, 1, ti) for ti in t]
        assert max(values) == pytest.approx(AMP, abs=1e-9)

    def test_bad_beam_rejected(self):
        with pytest.raises(InvalidInputError):
            dither_phase(stock_config(), 5, 0.0)


class TestDemodulateError:
    def test_zero_offset_near_zero_error(self):
        err = demodulate_error(cw_block(0.0), stock_config(), 1)
        assert abs(err) <= 1e-6 * 4.0

    def test_positive_offset_positive_error(self):
        err = demodulate_error(cw_block(0.1), stock_config(), 1)
        oracle = lockin_oracle(0.1)
        assert err > 0
        assert err == pytest.approx(oracle, rel=1e-6)
        # frozen closed form: 4 J1(amp) sin(dphi)
        assert err == pytest.approx(0.0397337, abs=1e-6)

    def test_matches_bessel_closed_form(self):
        for dphi in (-1.2, -0.4, 0.3, 0.9, 2.5):
            err = demodulate_error(cw_block(dphi), stock_config(), 1)
            assert err == pytest.approx(4.0 * j1(AMP) * np.sin(dphi), rel=1e-6)

    def test_sign_grid_against_oracle(self):
        for dphi in (0.2, 0.5, 1.0, 2.0, -0.2, -0.5, -1.0, -2.0):
            err = demodulate_error(cw_block(dphi), stock_config(), 1)
            oracle = lockin_oracle(dphi)
            assert np.sign(err) == np.sign(np.sin(dphi))
            assert err == pytest.approx(oracle, rel=1e-3)

    def test_cross_tone_orthogonality(self):
        cfg = stock_config(
            tones=[DitherTone(0.0, 0.0), DitherTone(200e3, AMP), DitherTone(240e3, AMP)]
        )
        block = cw_block(0.7, cfg, freq=240e3)  # only beam 2's tone present
        leak = demodulate_error(block, cfg, 1)  # demodulate beam 1 at 200 kHz
        assert abs(leak) <= 1e-3 * 4.0

    def test_wrong_length_rejected(self):
        cfg = stock_config()
        short = SampleSeries(FS, 0.0, np.ones(100))
        with pytest.raises(InvalidInputError):
            demodulate_error(short, cfg, 1)

    def test_reference_beam_rejected(self):
        with pytest.raises(InvalidInputError):
            demodulate_error(cw_block(0.0), stock_config(), 0)


class TestControllerStep:
    def test_zero_errors_fixed_point(self):
        state = ControllerState.initial(2)
        new = controller_step(state, [0.0, 0.0], 2.2)
        assert np.array_equal(new.phase_cmd_rad, state.phase_cmd_rad)

    def test_wrap_rule(self):
        state = ControllerState.initial(2)
        state.phase_cmd_rad = np.array([0.0, np.pi - 0.05])
        new = controller_step(state, [0.0, -1.0], 0.1)
        assert new.phase_cmd_rad[1] == pytest.approx(-np.pi + 0.05)

    def test_reference_stays_zero(self):
        state = ControllerState.initial(2)
        for _ in range(50):
            state = controller_step(state, [0.0, 0.3], 1.0)
            assert state.phase_cmd_rad[0] == 0.0

    def test_size_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            controller_step(ControllerState.initial(2), [0.1], 1.0)


class TestClosedLoop:
    def test_noise_free_step_locks_fast(self):
        # static 1 rad offset, no noise, no pulses: under 0.01 rad within
        # 1 ms of simulated time
        sc = paper_default_scenario(
            seed=1, with_pulses=False, with_noise=False, duration_s=1e-3
        )
        result = run_closed_loop(sc)
        assert abs(result.phase_diff.samples[-1]) < 0.01
        lock = lock_time_s(result.phase_diff, 0.01)
        assert lock is not None and lock <= 1e-3

    def test_already_locked_stays_locked(self):
        sc = paper_default_scenario(
            seed=1, with_pulses=False, with_noise=False, duration_s=0.5e-3,
            initial_phase_rad=0.0,
        )
        result = run_closed_loop(sc)
        assert np.max(np.abs(result.phase_diff.samples)) < 1e-9
        # intensity sits at I_max apart from the small dither wiggle
        t = result.intensity.times()
        expected = 2.0 + 2.0 * np.cos(AMP * np.sin(2 * np.pi * FREQ * t))
        assert np.allclose(result.intensity.samples, expected, rtol=1e-9)
        assert np.min(result.intensity.samples) >= 4.0 * np.cos(AMP / 2) ** 2 - 1e-9

    def test_already_locked_with_pulses(self):
        sc = paper_default_scenario(
            seed=1, with_noise=False, duration_s=0.5e-3, initial_phase_rad=0.0
        )
        result = run_closed_loop(sc)
        # intensity follows I(t) * envelope: baseline near 4, pulses huge
        samples = result.intensity.samples
        t = result.intensity.times()
        from pulselock.combiner import pulse_envelope_at

        env = 1.0 + pulse_envelope_at(sc.pulse_train, t)
        expected = env * (2.0 + 2.0 * np.cos(AMP * np.sin(2 * np.pi * FREQ * t)))
        assert np.allclose(samples, expected, rtol=1e-3)

    def test_paper_default_locks_and_combines(self):
        sc = paper_default_scenario(seed=1)
        result = run_closed_loop(sc)
        lock = lock_time_s(result.phase_diff, 0.1)
        assert lock is not None and lock <= 1e-3
        assert final_intensity_ratio(sc, result) >= 0.9

    def test_pulse_peaks_recover_after_lock(self):
        sc = paper_default_scenario(seed=1)
        result = run_closed_loop(sc)
        lock = lock_time_s(result.phase_diff, 0.1)
        times, ratios = pulse_peak_ratios(sc, result)
        after = ratios[times >= lock]
        assert after.size > 0
        assert np.min(after) >= 0.9

    def test_lock_holds_over_ten_milliseconds(self):
        sc = paper_default_scenario(seed=1, duration_s=10e-3)
        result = run_closed_loop(sc)
        lock = lock_time_s(result.phase_diff, 0.1)
        assert lock is not None and lock <= 1e-3
        after = result.phase_diff.samples[
            round(lock * sc.ad_rate_hz) + 1 :
        ]
        assert np.max(np.abs(after)) < 0.3

    def test_without_filter_lock_fails(self):
        # seed 2 shows the contamination plainly; see the acceptance
        # battery for the all-seed version of this control
        sc = paper_default_scenario(seed=2, duration_s=5e-3, with_filter=False)
        result = run_closed_loop(sc)
        assert final_intensity_ratio(sc, result) < 0.9

    def test_reference_command_identically_zero(self):
        sc = paper_default_scenario(seed=3)
        result = run_closed_loop(sc)
        assert result.controller.phase_cmd_rad[0] == 0.0

    def test_deterministic(self):
        a = run_closed_loop(paper_default_scenario(seed=6))
        b = run_closed_loop(paper_default_scenario(seed=6))
        assert np.array_equal(a.intensity.samples, b.intensity.samples)
        assert np.array_equal(a.phase_diff.samples, b.phase_diff.samples)

    def test_filter_keeps_working_during_lock(self):
        sc = paper_default_scenario(seed=1)
        result = run_closed_loop(sc)
        n_pulses_expected = int(sc.duration_s * sc.pulse_train.f_rep_hz)
        assert len(result.report.replaced_ranges) >= n_pulses_expected - 1
        assert np.max(result.filtered_intensity.samples) < 100.0

    def test_controller_required(self):
        sc = paper_default_scenario(seed=1, with_controller=False)
        with pytest.raises(InvalidInputError):
            run_closed_loop(sc)
