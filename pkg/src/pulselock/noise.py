"""Reproducible phase-noise synthesis.

A noise waveform is a bank of sinusoids plus white Gaussian jitter:

    n(t) = sum_i A_i * sin(2*pi*f_i*t + phi_i) + w(t),   units: radians

The sinusoid bank models slow environmental drift (mechanical and thermal
paths), the white term the residual fast jitter.  Everything is derived
from a single 64-bit seed so distinct beams get independent but exactly
reproducible streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .waveform import SampleSeries

#: default cap on the summed sinusoid amplitudes: a one-twentieth-wave
#: optical path excursion expressed in phase units.
DEFAULT_MAX_AMPLITUDE_RAD = 2.0 * np.pi / 20.0

#: default upper edge for sinusoid frequencies.
DEFAULT_BAND_LIMIT_HZ = 5000.0


@dataclass(frozen=True)
class SinusoidComponent:
    amplitude_rad: float
    freq_hz: float
    phase_rad: float


@dataclass
class NoiseModel:
    """Sinusoid bank plus white-noise level, fully determined by ``seed``."""

    components: list[SinusoidComponent] = field(default_factory=list)
    white_sigma_rad: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.white_sigma_rad < 0:
            raise InvalidInputError("white_sigma_rad must be non-negative")
        for c in self.components:
            if c.amplitude_rad < 0:
                raise InvalidInputError("component amplitudes must be non-negative")
            if c.freq_hz <= 0:
                raise InvalidInputError("component frequencies must be positive")

    @property
    def amplitude_sum_rad(self) -> float:
        return float(sum(c.amplitude_rad for c in self.components))

    @property
    def max_freq_hz(self) -> float:
        return max((c.freq_hz for c in self.components), default=0.0)

    def to_dict(self) -> dict:
        return {
            "components": [
                {
                    "amplitude_rad": c.amplitude_rad,
                    "freq_hz": c.freq_hz,
                    "phase_rad": c.phase_rad,
                }
                for c in self.components
            ],
            "white_sigma_rad": self.white_sigma_rad,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        comps = [
            SinusoidComponent(c["amplitude_rad"], c["freq_hz"], c["phase_rad"])
            for c in d.get("components", [])
        ]
        return cls(comps, d.get("white_sigma_rad", 0.0), d.get("seed", 0))


def _stream(seed: int, key: int) -> np.random.Generator:
    # Disjoint child streams of one seed: key 0 draws model parameters,
    # key 1 drives the white-noise samples.
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))


def derived_seed(seed: int, index: int) -> int:
    """Deterministic per-index child seed (one per beam)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def random_noise_model(
    n_components: int,
    band_limit_hz: float = DEFAULT_BAND_LIMIT_HZ,
    max_amplitude_rad: float = DEFAULT_MAX_AMPLITUDE_RAD,
    white_sigma_rad: float = 0.0,
    seed: int = 0,
) -> NoiseModel:
    """Draw a noise model from ``seed``.

    Frequencies are uniform in ``(0, band_limit_hz]``, initial phases
    uniform in ``[0, 2*pi)``, and amplitudes are uniform draws rescaled so
    their sum equals ``max_amplitude_rad`` exactly (when ``n_components``
    is positive).
    """
    if n_components < 0:
        raise InvalidInputError("n_components must be non-negative")
    if band_limit_hz <= 0:
        raise InvalidInputError("band_limit_hz must be positive")
    if max_amplitude_rad < 0:
        raise InvalidInputError("max_amplitude_rad must be non-negative")
    if white_sigma_rad < 0:
        raise InvalidInputError("white_sigma_rad must be non-negative")

    rng = _stream(seed, 0)
    components: list[SinusoidComponent] = []
    if n_components > 0:
        freqs = band_limit_hz * (1.0 - rng.uniform(size=n_components))  # (0, band]
        phases = rng.uniform(0.0, 2.0 * np.pi, size=n_components)
        raw = rng.uniform(size=n_components)
        total = raw.sum()
        if total == 0.0:
            raw = np.full(n_components, 1.0)
            total = float(n_components)
        amps = max_amplitude_rad * raw / total
        components = [
            SinusoidComponent(float(a), float(f), float(p))
            for a, f, p in zip(amps, freqs, phases)
        ]
    return NoiseModel(components, white_sigma_rad, seed)


def sinusoid_bank_at(model: NoiseModel, t: np.ndarray) -> np.ndarray:
    """Evaluate only the sinusoid bank (no white noise) at times ``t``."""
    out = np.zeros_like(t, dtype=np.float64)
    for c in model.components:
        out += c.amplitude_rad * np.sin(2.0 * np.pi * c.freq_hz * t + c.phase_rad)
    return out


def white_noise_stream(model: NoiseModel) -> np.random.Generator:
    """Generator for the model's white-noise draws.

    Sequential blockwise draws from this generator reproduce exactly the
    samples :func:`synth_phase_noise` would produce in one shot, which lets
    a control loop consume noise period by period.
    """
    return _stream(model.seed, 1)


def synth_phase_noise(
    model: NoiseModel, duration_s: float, sample_rate_hz: float
) -> SampleSeries:
    """Render ``model`` to a sampled waveform starting at t = 0."""
    if duration_s <= 0:
        raise InvalidInputError("duration_s must be positive")
    if sample_rate_hz <= 0:
        raise InvalidInputError("sample_rate_hz must be positive")
    f_max = model.max_freq_hz
    if f_max > 0 and sample_rate_hz <= 2.0 * f_max:
        raise InvalidInputError(
            f"sample rate {sample_rate_hz} Hz is below the Nyquist rate for the "
            f"fastest component ({f_max} Hz)"
        )
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise InvalidInputError("duration too short for the given sample rate")
    t = np.arange(n) / sample_rate_hz
    x = sinusoid_bank_at(model, t)
    if model.white_sigma_rad > 0:
        x = x + white_noise_stream(model).normal(0.0, model.white_sigma_rad, size=n)
    return SampleSeries(sample_rate_hz, 0.0, x)
