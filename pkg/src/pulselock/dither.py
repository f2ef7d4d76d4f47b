"""Multi-dither phase locking.

Each controlled beam carries a small sinusoidal phase tag at its own
frequency.  Synchronously demodulating the (filtered) detector signal at a
beam's tag frequency over one integration period recovers that beam's
phase error; a per-beam integrator turns the errors into phase-modulator
commands.  One beam is the undithered, uncommanded reference.

Sign convention: the error returned by :func:`demodulate_error` is
positive when the beam's phase leads the combined-intensity optimum, so
the integrator update ``cmd -= gain * error`` walks the intensity uphill.
The raw lock-in integral has the opposite sign (the intensity derivative
is negative for a leading beam), hence the negation in the implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .combiner import combined_intensity_series, envelope_at
from .errors import InvalidInputError
from .noise import sinusoid_bank_at, white_noise_stream
from .pulse_filter import FilterReport, FilterState, process_stream_block
from .waveform import SampleSeries

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import ScenarioConfig

TWO_PI = 2.0 * math.pi


def wrap_phase(x: float) -> float:
    """Wrap to the half-open interval (-pi, pi]."""
    return math.pi - (math.pi - x) % TWO_PI


def wrap_phase_array(x: np.ndarray) -> np.ndarray:
    return np.pi - np.mod(np.pi - x, TWO_PI)


@dataclass
class DitherTone:
    """Per-beam tag: frequency 0 marks the reference beam's silent slot."""

    dither_freq_hz: float = 0.0
    dither_amp_rad: float = 0.0


@dataclass
class DitherConfig:
    """Dither tones, integration period and integrator gain."""

    tones: list[DitherTone]
    integration_period_s: float = 5e-5
    gain: float = 2.2
    reference_beam: int = 0

    def __post_init__(self) -> None:
        if not self.tones:
            raise InvalidInputError("need one dither tone slot per beam")
        if not 0 <= self.reference_beam < len(self.tones):
            raise InvalidInputError("reference_beam index out of range")
        if self.integration_period_s <= 0:
            raise InvalidInputError("integration_period_s must be positive")

    def dithered_beams(self) -> list[int]:
        return [
            m
            for m, tone in enumerate(self.tones)
            if m != self.reference_beam and tone.dither_freq_hz > 0
        ]

    def to_dict(self) -> dict:
        return {
            "tones": [
                {"dither_freq_hz": t.dither_freq_hz, "dither_amp_rad": t.dither_amp_rad}
                for t in self.tones
            ],
            "integration_period_s": self.integration_period_s,
            "gain": self.gain,
            "reference_beam": self.reference_beam,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DitherConfig":
        return cls(
            tones=[
                DitherTone(t.get("dither_freq_hz", 0.0), t.get("dither_amp_rad", 0.0))
                for t in d["tones"]
            ],
            integration_period_s=d.get("integration_period_s", 5e-5),
            gain=d.get("gain", 2.2),
            reference_beam=d.get("reference_beam", 0),
        )


@dataclass
class ControllerState:
    """Integrator state: wrapped commands plus the running error sums."""

    phase_cmd_rad: np.ndarray
    error_integral: np.ndarray
    periods_completed: int = 0

    @classmethod
    def initial(cls, n_beams: int) -> "ControllerState":
        return cls(np.zeros(n_beams), np.zeros(n_beams))

    def copy(self) -> "ControllerState":
        return replace(
            self,
            phase_cmd_rad=self.phase_cmd_rad.copy(),
            error_integral=self.error_integral.copy(),
        )


def dither_phase(config: DitherConfig, beam: int, t: float) -> float:
    """Instantaneous dither phase of ``beam``; identically 0 for the reference."""
    if not 0 <= beam < len(config.tones):
        raise InvalidInputError(f"beam index {beam} out of range")
    if beam == config.reference_beam:
        return 0.0
    tone = config.tones[beam]
    return tone.dither_amp_rad * math.sin(TWO_PI * tone.dither_freq_hz * t)


def dither_phases_at(config: DitherConfig, t: np.ndarray) -> np.ndarray:
    """Dither phase of every beam at times ``t`` (rows: beams)."""
    out = np.zeros((len(config.tones), t.size))
    for m, tone in enumerate(config.tones):
        if m == config.reference_beam or tone.dither_freq_hz == 0:
            continue
        out[m] = tone.dither_amp_rad * np.sin(TWO_PI * tone.dither_freq_hz * t)
    return out


def demodulate_error(
    filtered: SampleSeries, config: DitherConfig, beam: int
) -> float:
    """Lock-in estimate of one beam's phase error over one integration period.

    Computes ``-(2/T) * sum_j x_j * sin(2*pi*f_beam*t_j) * dt``: the
    negated in-phase lock-in product, so that a beam whose phase leads the
    optimum yields a positive error (see the module docstring).
    """
    if not 0 <= beam < len(config.tones):
        raise InvalidInputError(f"beam index {beam} out of range")
    tone = config.tones[beam]
    if beam == config.reference_beam or tone.dither_freq_hz <= 0:
        raise InvalidInputError(f"beam {beam} carries no dither tone to demodulate")
    fs = filtered.sample_rate_hz
    expected = round(config.integration_period_s * fs)
    if len(filtered) != expected:
        raise InvalidInputError(
            f"series of {len(filtered)} samples does not span one integration "
            f"period ({expected} samples at {fs} Hz)"
        )
    t = filtered.times()
    dt = 1.0 / fs
    period = len(filtered) * dt
    raw = (2.0 / period) * float(
        np.sum(filtered.samples * np.sin(TWO_PI * tone.dither_freq_hz * t)) * dt
    )
    return -raw


def controller_step(
    state: ControllerState, errors, gain: float
) -> ControllerState:
    """Integrator update ``cmd -= gain * error`` for every controlled beam.

    ``errors`` holds one value per beam with the reference entry ignored
    (pass 0.0 there); the reference command stays pinned at zero.
    """
    errors = np.asarray(errors, dtype=np.float64)
    if errors.shape != state.phase_cmd_rad.shape:
        raise InvalidInputError(
            f"got {errors.size} errors for {state.phase_cmd_rad.size} beams"
        )
    new = state.copy()
    new.error_integral = state.error_integral + errors
    new.phase_cmd_rad = wrap_phase_array(state.phase_cmd_rad - gain * errors)
    new.periods_completed = state.periods_completed + 1
    return new


@dataclass
class ClosedLoopResult:
    """Traces and bookkeeping from one closed-loop run."""

    intensity: SampleSeries
    filtered_intensity: SampleSeries
    phase_diff: SampleSeries
    report: FilterReport
    controller: ControllerState


def run_closed_loop(scenario: "ScenarioConfig") -> ClosedLoopResult:
    """Simulate the full lock loop period by period.

    Each integration period: synthesise the detector block (noise, dither
    and current commands in every beam's phase), filter it, demodulate one
    error per dithered beam, integrate into new commands for the next
    period.  The filter state persists across periods so the window
    schedule is maintained for the whole run.

    The ``intensity`` trace is the raw detector output; ``phase_diff`` is
    the wrapped beam-1-minus-reference phase excluding dither, i.e. the
    quantity the loop is trying to drive to zero.
    """
    scenario.validate()
    cfg = scenario.controller
    if cfg is None:
        raise InvalidInputError("scenario has no controller block")
    fs = scenario.ad_rate_hz
    n_per = round(cfg.integration_period_s * fs)
    n_periods = int(math.floor(scenario.duration_s / cfg.integration_period_s))
    beams = scenario.beams
    amps = np.array([b.amplitude for b in beams])
    scale = scenario.detector.responsivity * scenario.detector.area
    dithered = cfg.dithered_beams()
    other = [m for m in range(len(beams)) if m != cfg.reference_beam]
    probe = other[0] if other else cfg.reference_beam

    white = [white_noise_stream(b.noise_model) for b in beams]
    controller = ControllerState.initial(len(beams))
    filter_state = (
        FilterState(params=scenario.filter) if scenario.filter is not None else None
    )
    report = FilterReport()

    raw_all = np.empty(n_periods * n_per)
    filt_all = np.empty(n_periods * n_per)
    dphi_all = np.empty(n_periods * n_per)

    for p in range(n_periods):
        j0 = p * n_per
        t = (j0 + np.arange(n_per)) / fs
        base = np.empty((len(beams), n_per))
        for m, beam in enumerate(beams):
            phi = (
                beam.initial_phase_rad
                + sinusoid_bank_at(beam.noise_model, t)
                + controller.phase_cmd_rad[m]
            )
            if beam.noise_model.white_sigma_rad > 0:
                phi = phi + white[m].normal(
                    0.0, beam.noise_model.white_sigma_rad, size=n_per
                )
            base[m] = phi
        phases = base + dither_phases_at(cfg, t)
        env = envelope_at(scenario, t)
        raw = scale * combined_intensity_series(amps, phases, env)

        if filter_state is not None:
            block = SampleSeries(fs, j0 / fs, raw)
            filtered_block, filter_state, block_report = process_stream_block(
                block, filter_state
            )
            filtered = filtered_block.samples
            report = report.merge(block_report)
        else:
            filtered = raw

        errors = np.zeros(len(beams))
        fseries = SampleSeries(fs, j0 / fs, filtered)
        for m in dithered:
            errors[m] = demodulate_error(fseries, cfg, m)
        controller = controller_step(controller, errors, cfg.gain)

        raw_all[j0 : j0 + n_per] = raw
        filt_all[j0 : j0 + n_per] = filtered
        diff = base[probe] - base[cfg.reference_beam]
        dphi_all[j0 : j0 + n_per] = wrap_phase_array(diff)

    return ClosedLoopResult(
        intensity=SampleSeries(fs, 0.0, raw_all),
        filtered_intensity=SampleSeries(fs, 0.0, filt_all),
        phase_diff=SampleSeries(fs, 0.0, dphi_all),
        report=report,
        controller=controller,
    )


# -- closed-loop analysis ----------------------------------------------------


def lock_time_s(phase_diff: SampleSeries, threshold_rad: float = 0.1) -> float | None:
    """First time after which ``|phase_diff|`` stays below ``threshold_rad``.

    ``None`` when the trace never settles (the final sample still exceeds
    the threshold).
    """
    bad = np.abs(phase_diff.samples) >= threshold_rad
    if not bad.any():
        return 0.0
    last = int(np.max(np.nonzero(bad)[0]))
    if last == len(phase_diff) - 1:
        return None
    return phase_diff.t0_s + (last + 1) / phase_diff.sample_rate_hz


def pulse_sample_mask(scenario: "ScenarioConfig", series: SampleSeries) -> np.ndarray:
    """Boolean mask of samples that fall inside configured pulse intervals."""
    if scenario.pulse_train is None:
        return np.zeros(len(series), dtype=bool)
    from .combiner import pulse_envelope_at

    return pulse_envelope_at(scenario.pulse_train, series.times()) > 0.0


def ideal_intensity(scenario: "ScenarioConfig") -> float:
    """Detector-scale combined intensity at zero phase differences,
    excluding the pulse boost (the inter-pulse lock target)."""
    total = sum(b.amplitude for b in scenario.beams)
    return (
        scenario.background_level
        * total**2
        * scenario.detector.responsivity
        * scenario.detector.area
    )


def final_intensity_ratio(
    scenario: "ScenarioConfig", result: ClosedLoopResult, window_s: float = 0.2e-3
) -> float:
    """Mean inter-pulse intensity over the final ``window_s``, as a fraction
    of the zero-phase-difference target.

    Pulse samples are excluded: their boosted amplitude says nothing about
    lock quality and would otherwise dominate the mean.
    """
    series = result.intensity
    n = len(series)
    start = max(0, n - round(window_s * series.sample_rate_hz))
    mask = pulse_sample_mask(scenario, series)
    window = series.samples[start:][~mask[start:]]
    if window.size == 0:
        raise InvalidInputError("no inter-pulse samples in the final window")
    return float(window.mean()) / ideal_intensity(scenario)


def pulse_peak_ratios(
    scenario: "ScenarioConfig", result: ClosedLoopResult
) -> tuple[np.ndarray, np.ndarray]:
    """(times, ratios) of every pulse sample relative to its ideal height."""
    if scenario.pulse_train is None:
        return np.empty(0), np.empty(0)
    series = result.intensity
    mask = pulse_sample_mask(scenario, series)
    idx = np.nonzero(mask)[0]
    total = sum(b.amplitude for b in scenario.beams)
    ideal = (
        (scenario.background_level + scenario.pulse_train.peak)
        * total**2
        * scenario.detector.responsivity
        * scenario.detector.area
    )
    return idx / series.sample_rate_hz, series.samples[idx] / ideal
