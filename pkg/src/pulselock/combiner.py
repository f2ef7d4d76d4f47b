"""Pulsed multi-beam interference and detector sampling.

Each beam contributes a scalar field ``A_m * exp(j*phi_m(t))``; the shared
intensity envelope carries the pulse train.  The detector signal is

    i(t) = R * S * envelope(t) * |sum_m A_m exp(j phi_m(t))|^2

sampled instant-by-instant: there is no anti-alias filtering anywhere, so
a nanosecond pulse that straddles a sampling instant shows up as a single
large-amplitude isolated point, and a pulse that misses every instant is
simply not seen.  That behaviour is what the downstream window filter is
built to exploit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import InvalidInputError
from .noise import NoiseModel, sinusoid_bank_at, white_noise_stream
from .waveform import SampleSeries

if TYPE_CHECKING:  # pragma: no cover
    from .scenario import ScenarioConfig

PULSE_SHAPES = ("rectangular", "gaussian")


@dataclass
class PulseTrain:
    """Periodic intensity envelope: pulses of height ``peak``, zero between.

    ``width_s`` is the nominal pulse width, ``broadened_width_s`` the width
    after amplification stretch (never narrower, never a full period).
    """

    f_rep_hz: float
    width_s: float
    broadened_width_s: float | None = None
    peak: float = 1.0
    first_pulse_time_s: float = 0.0
    shape: str = "rectangular"

    def __post_init__(self) -> None:
        if self.broadened_width_s is None:
            self.broadened_width_s = self.width_s
        if self.f_rep_hz <= 0:
            raise InvalidInputError("f_rep_hz must be positive")
        if not 0 < self.width_s <= self.broadened_width_s:
            raise InvalidInputError("need 0 < width_s <= broadened_width_s")
        if self.broadened_width_s >= 1.0 / self.f_rep_hz:
            raise InvalidInputError("broadened_width_s must be below one period")
        if self.shape not in PULSE_SHAPES:
            raise InvalidInputError(f"shape must be one of {PULSE_SHAPES}")

    @property
    def period_s(self) -> float:
        return 1.0 / self.f_rep_hz

    def to_dict(self) -> dict:
        return {
            "f_rep_hz": self.f_rep_hz,
            "width_s": self.width_s,
            "broadened_width_s": self.broadened_width_s,
            "peak": self.peak,
            "first_pulse_time_s": self.first_pulse_time_s,
            "shape": self.shape,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PulseTrain":
        return cls(
            f_rep_hz=d["f_rep_hz"],
            width_s=d["width_s"],
            broadened_width_s=d.get("broadened_width_s"),
            peak=d.get("peak", 1.0),
            first_pulse_time_s=d.get("first_pulse_time_s", 0.0),
            shape=d.get("shape", "rectangular"),
        )


@dataclass
class BeamConfig:
    """One beam: field amplitude, its phase-noise model, a static offset."""

    amplitude: float
    noise_model: NoiseModel
    initial_phase_rad: float = 0.0

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise InvalidInputError("beam amplitude must be non-negative")

    def to_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "noise_model": self.noise_model.to_dict(),
            "initial_phase_rad": self.initial_phase_rad,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BeamConfig":
        return cls(
            amplitude=d["amplitude"],
            noise_model=NoiseModel.from_dict(d["noise_model"]),
            initial_phase_rad=d.get("initial_phase_rad", 0.0),
        )


@dataclass
class DetectorModel:
    """Photodetector scaling: responsivity times active-area factor."""

    responsivity: float = 1.0
    area: float = 1.0

    def __post_init__(self) -> None:
        if self.responsivity <= 0 or self.area <= 0:
            raise InvalidInputError("responsivity and area must be positive")

    def to_dict(self) -> dict:
        return {"responsivity": self.responsivity, "area": self.area}

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorModel":
        return cls(d.get("responsivity", 1.0), d.get("area", 1.0))


def pulse_envelope_at(train: PulseTrain, t: np.ndarray) -> np.ndarray:
    """Vectorised pulse envelope; zero before the first pulse and between
    pulses, ``peak`` (or a Gaussian bump) inside each pulse interval."""
    t = np.asarray(t, dtype=np.float64)
    offset = t - train.first_pulse_time_s
    period = train.period_s
    # The 1e-9-cycle nudge keeps samples that sit exactly on a pulse start
    # from rounding to the end of the previous period.
    pos = offset - np.floor(offset / period + 1e-9) * period
    inside = (offset >= -1e-9 * period) & (pos <= train.broadened_width_s)
    if train.shape == "rectangular":
        return np.where(inside, train.peak, 0.0)
    # Gaussian bump centred in the broadened interval, FWHM = width_s,
    # truncated to the interval so the envelope stays zero elsewhere.
    centre = 0.5 * train.broadened_width_s
    bump = train.peak * np.exp(-4.0 * math.log(2.0) * ((pos - centre) / train.width_s) ** 2)
    return np.where(inside, bump, 0.0)


def pulse_envelope(train: PulseTrain, t: float) -> float:
    """Scalar envelope value at time ``t`` (t >= 0)."""
    return float(pulse_envelope_at(train, np.array([t]))[0])


def combined_intensity(amplitudes, phases_rad, envelope: float) -> float:
    """Coherent superposition of scalar fields under a common envelope.

    Returns ``envelope * |sum_m A_m exp(j phi_m)|^2``, the sum of the
    individual intensities plus all pairwise interference cross terms.
    """
    amps = np.asarray(amplitudes, dtype=np.float64)
    phases = np.asarray(phases_rad, dtype=np.float64)
    if amps.size == 0 or amps.shape != phases.shape:
        raise InvalidInputError("amplitudes and phases must be equal-length, non-empty")
    if envelope < 0:
        raise InvalidInputError("envelope must be non-negative")
    total = np.sum(amps * np.exp(1j * phases))
    return float(envelope * np.abs(total) ** 2)


def combined_intensity_series(
    amplitudes: np.ndarray, phases: np.ndarray, envelope: np.ndarray
) -> np.ndarray:
    """Vectorised form: ``phases`` has shape (n_beams, n_samples)."""
    total = np.einsum("m,mn->n", amplitudes.astype(np.complex128), np.exp(1j * phases))
    return envelope * np.abs(total) ** 2


def detector_current(power: SampleSeries, det: DetectorModel) -> SampleSeries:
    """Pointwise detector response, same time base as the input."""
    if power.samples.size and float(power.samples.min()) < 0:
        raise InvalidInputError("optical power samples must be non-negative")
    return SampleSeries(
        power.sample_rate_hz,
        power.t0_s,
        det.responsivity * det.area * power.samples,
    )


def ad_sample(analog: SampleSeries, f_s_hz: float) -> SampleSeries:
    """Decimate by picking every (rate ratio)-th instantaneous sample.

    No anti-alias filter: the converter grabs point values, which is what
    turns sub-sample pulses into isolated large-amplitude points.
    """
    if f_s_hz <= 0:
        raise InvalidInputError("f_s_hz must be positive")
    ratio = analog.sample_rate_hz / f_s_hz
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-9 * ratio:
        raise InvalidInputError(
            f"analog rate {analog.sample_rate_hz} Hz is not an integer multiple "
            f"of {f_s_hz} Hz"
        )
    return SampleSeries(f_s_hz, analog.t0_s, analog.samples[::step].copy())


def beam_phases(
    scenario: "ScenarioConfig", t: np.ndarray, include_dither: bool = True
) -> np.ndarray:
    """Phase of every beam at times ``t`` (rows: beams), open-loop commands.

    White-noise draws are taken one-shot per call; use the blockwise
    helpers in :mod:`pulselock.dither` when phases must continue across
    control periods.
    """
    phases = np.empty((len(scenario.beams), t.size), dtype=np.float64)
    for m, beam in enumerate(scenario.beams):
        phi = beam.initial_phase_rad + sinusoid_bank_at(beam.noise_model, t)
        if beam.noise_model.white_sigma_rad > 0:
            phi = phi + white_noise_stream(beam.noise_model).normal(
                0.0, beam.noise_model.white_sigma_rad, size=t.size
            )
        phases[m] = phi
    if include_dither and scenario.controller is not None:
        from .dither import dither_phases_at

        phases += dither_phases_at(scenario.controller, t)
    return phases


def envelope_at(scenario: "ScenarioConfig", t: np.ndarray) -> np.ndarray:
    """Total intensity envelope: CW background plus the pulse train."""
    env = np.full(t.size, scenario.background_level, dtype=np.float64)
    if scenario.pulse_train is not None:
        env += pulse_envelope_at(scenario.pulse_train, t)
    return env


def simulate_open_loop(scenario: "ScenarioConfig") -> SampleSeries:
    """Detector output with noise and pulses but no feedback.

    Phases carry each beam's static offset plus its noise (plus dither
    tones when a controller block is present in the scenario, with all
    commands held at zero).  Deterministic given the scenario seed.
    """
    scenario.validate()
    fs = scenario.ad_rate_hz
    n = int(round(scenario.duration_s * fs))
    t = np.arange(n) / fs
    phases = beam_phases(scenario, t)
    amps = np.array([b.amplitude for b in scenario.beams])
    intensity = combined_intensity_series(amps, phases, envelope_at(scenario, t))
    scale = scenario.detector.responsivity * scenario.detector.area
    return SampleSeries(fs, 0.0, scale * intensity)
