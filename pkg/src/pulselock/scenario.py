"""Full experiment description, JSON round-trip and validation.

A scenario bundles everything one run needs: the beams with their noise
models, the shared pulse train, detector scaling, sampling rates, filter
parameters, controller configuration, duration and the master seed.  The
stock configuration (:func:`paper_default_scenario`) is a two-beam,
10 kHz-repetition, 10 ns-pulse system sampled at 10 MHz.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .combiner import BeamConfig, DetectorModel, PulseTrain
from .dither import DitherConfig, DitherTone
from .errors import ScenarioError
from .noise import derived_seed, random_noise_model
from .pulse_filter import DetectorParams

#: stock parameters: 2 beams, 10 kHz repetition, 10 ns pulses, 10 MHz AD,
#: 100 ns window, 5 confirmation windows.
DEFAULT_AD_RATE_HZ = 10e6
DEFAULT_INTERNAL_RATE_HZ = 1e9
DEFAULT_F_REP_HZ = 10e3
DEFAULT_PULSE_WIDTH_S = 10e-9
DEFAULT_WINDOW_WIDTH_S = 100e-9
DEFAULT_PULSE_PEAK = 5000.0
#: first pulse near 50 us but deliberately off the dither tone's zero
#: crossings (a pulse train synchronous with those crossings would leave
#: the demodulator untouched and hide the contamination problem).
DEFAULT_FIRST_PULSE_TIME_S = 51.3e-6
DEFAULT_DITHER_FREQ_HZ = 200e3
DEFAULT_DITHER_AMP_RAD = 0.2
DEFAULT_INTEGRATION_PERIOD_S = 50e-6
DEFAULT_GAIN = 2.2
#: noise defaults: 8 tones, summed amplitude one-twentieth wave, tones kept
#: in the low hundreds of hertz where vibration-driven drift lives.
DEFAULT_NOISE_COMPONENTS = 8
DEFAULT_NOISE_BAND_HZ = 500.0
DEFAULT_WHITE_SIGMA_RAD = 0.005


@dataclass
class NoiseRecipe:
    """How to derive per-beam noise models from the scenario seed."""

    n_components: int = DEFAULT_NOISE_COMPONENTS
    band_limit_hz: float = DEFAULT_NOISE_BAND_HZ
    max_amplitude_rad: float = 2.0 * math.pi / 20.0
    white_sigma_rad: float = DEFAULT_WHITE_SIGMA_RAD

    def to_dict(self) -> dict:
        return {
            "n_components": self.n_components,
            "band_limit_hz": self.band_limit_hz,
            "max_amplitude_rad": self.max_amplitude_rad,
            "white_sigma_rad": self.white_sigma_rad,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseRecipe":
        return cls(**d)


@dataclass
class ScenarioConfig:
    beams: list[BeamConfig]
    detector: DetectorModel
    ad_rate_hz: float
    internal_rate_hz: float
    duration_s: float
    seed: int
    pulse_train: PulseTrain | None = None
    background_level: float = 1.0
    filter: DetectorParams | None = None
    controller: DitherConfig | None = None
    noise_recipe: NoiseRecipe | None = None

    def validate(self) -> None:
        """Raise :class:`ScenarioError` naming the first violated invariant."""
        if not self.beams:
            raise ScenarioError("scenario needs at least one beam")
        if self.ad_rate_hz <= 0:
            raise ScenarioError("ad_rate_hz must be positive")
        ratio = self.internal_rate_hz / self.ad_rate_hz
        if abs(ratio - round(ratio)) > 1e-9 * ratio or ratio < 1:
            raise ScenarioError(
                "internal_rate_hz must be an integer multiple of ad_rate_hz"
            )
        if self.duration_s <= 0:
            raise ScenarioError("duration_s must be positive")
        if self.background_level < 0:
            raise ScenarioError("background_level must be non-negative")
        if self.seed < 0 or self.seed > 2**64 - 1:
            raise ScenarioError("seed must fit in 64 unsigned bits")
        for m, beam in enumerate(self.beams):
            f_max = beam.noise_model.max_freq_hz
            if f_max > 0 and self.ad_rate_hz <= 2.0 * f_max:
                raise ScenarioError(
                    f"beam {m}: AD rate below Nyquist for its {f_max} Hz noise tone"
                )
        if self.pulse_train is not None:
            if self.duration_s < 2.0 / self.pulse_train.f_rep_hz:
                raise ScenarioError(
                    "duration_s must cover at least two pulse periods"
                )
        if self.filter is not None:
            if self.pulse_train is not None:
                expected = round(self.ad_rate_hz / self.pulse_train.f_rep_hz)
                if self.filter.period_samples != expected:
                    raise ScenarioError(
                        f"filter period_samples {self.filter.period_samples} does "
                        f"not match the pulse train ({expected} samples)"
                    )
        if self.controller is not None:
            self._validate_controller()

    def _validate_controller(self) -> None:
        cfg = self.controller
        if len(cfg.tones) != len(self.beams):
            raise ScenarioError("controller needs one dither tone slot per beam")
        n = cfg.integration_period_s * self.ad_rate_hz
        if abs(n - round(n)) > 1e-6:
            raise ScenarioError(
                "integration_period_s must be a whole number of AD samples"
            )
        if self.duration_s < cfg.integration_period_s:
            raise ScenarioError("duration_s shorter than one integration period")
        freqs = []
        for m, tone in enumerate(cfg.tones):
            if m == cfg.reference_beam:
                continue
            if tone.dither_freq_hz <= 0:
                raise ScenarioError(f"beam {m}: non-reference beams must be dithered")
            cycles = tone.dither_freq_hz * cfg.integration_period_s
            if abs(cycles - round(cycles)) > 1e-6:
                raise ScenarioError(
                    f"beam {m}: dither must complete whole cycles per integration "
                    "period"
                )
            if self.pulse_train is not None and (
                tone.dither_freq_hz <= self.pulse_train.f_rep_hz
            ):
                raise ScenarioError(
                    f"beam {m}: dither frequency must exceed the pulse repetition "
                    "frequency"
                )
            freqs.append(tone.dither_freq_hz)
        min_sep = 1.0 / cfg.integration_period_s
        freqs.sort()
        for a, b in zip(freqs, freqs[1:]):
            if b - a < min_sep * (1.0 - 1e-9):
                raise ScenarioError(
                    "dither frequencies closer than one integration-period line "
                    "spacing are not separable"
                )

    # -- JSON round-trip ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "beams": [b.to_dict() for b in self.beams],
            "detector": self.detector.to_dict(),
            "ad_rate_hz": self.ad_rate_hz,
            "internal_rate_hz": self.internal_rate_hz,
            "duration_s": self.duration_s,
            "seed": self.seed,
            "pulse_train": self.pulse_train.to_dict() if self.pulse_train else None,
            "background_level": self.background_level,
            "filter": self.filter.to_dict() if self.filter else None,
            "controller": self.controller.to_dict() if self.controller else None,
            "noise_recipe": self.noise_recipe.to_dict() if self.noise_recipe else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(
            beams=[BeamConfig.from_dict(b) for b in d["beams"]],
            detector=DetectorModel.from_dict(d["detector"]),
            ad_rate_hz=d["ad_rate_hz"],
            internal_rate_hz=d["internal_rate_hz"],
            duration_s=d["duration_s"],
            seed=d["seed"],
            pulse_train=(
                PulseTrain.from_dict(d["pulse_train"]) if d.get("pulse_train") else None
            ),
            background_level=d.get("background_level", 1.0),
            filter=(
                DetectorParams.from_dict(d["filter"]) if d.get("filter") else None
            ),
            controller=(
                DitherConfig.from_dict(d["controller"]) if d.get("controller") else None
            ),
            noise_recipe=(
                NoiseRecipe.from_dict(d["noise_recipe"])
                if d.get("noise_recipe")
                else None
            ),
        )

    def to_json(self, path) -> None:
        with open(path, "w", newline="\n") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_json(cls, path) -> "ScenarioConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def with_seed(self, seed: int) -> "ScenarioConfig":
        """Re-seed the scenario.

        When a noise recipe is present the per-beam noise models are
        re-derived from the new seed; otherwise the explicit sinusoid
        banks are kept and only the white-noise streams re-seed.
        """
        cfg = ScenarioConfig.from_dict(self.to_dict())
        cfg.seed = seed
        if cfg.noise_recipe is not None:
            recipe = cfg.noise_recipe
            for m, beam in enumerate(cfg.beams):
                beam.noise_model = random_noise_model(
                    recipe.n_components,
                    recipe.band_limit_hz,
                    recipe.max_amplitude_rad,
                    recipe.white_sigma_rad,
                    seed=derived_seed(seed, m),
                )
        else:
            for m, beam in enumerate(cfg.beams):
                beam.noise_model.seed = derived_seed(seed, m)
        return cfg


def default_filter_params(
    ad_rate_hz: float = DEFAULT_AD_RATE_HZ,
    f_rep_hz: float = DEFAULT_F_REP_HZ,
    broadened_width_s: float = DEFAULT_PULSE_WIDTH_S,
    window_width_s: float = DEFAULT_WINDOW_WIDTH_S,
) -> DetectorParams:
    return DetectorParams.for_pulse_train(
        f_rep_hz=f_rep_hz,
        broadened_width_s=broadened_width_s,
        sample_rate_hz=ad_rate_hz,
        window_width_s=window_width_s,
    )


def paper_default_scenario(
    seed: int = 1,
    duration_s: float = 2e-3,
    with_pulses: bool = True,
    with_filter: bool = True,
    with_controller: bool = True,
    with_noise: bool = True,
    first_pulse_time_s: float = DEFAULT_FIRST_PULSE_TIME_S,
    initial_phase_rad: float = 1.0,
) -> ScenarioConfig:
    """Two equal beams with the stock pulse, noise and control parameters.

    Beam 0 is the undithered reference at zero phase; beam 1 starts
    ``initial_phase_rad`` away and carries the 200 kHz dither tag.
    """
    recipe = NoiseRecipe() if with_noise else NoiseRecipe(0, DEFAULT_NOISE_BAND_HZ, 0.0, 0.0)
    beams = []
    for m, phase in enumerate((0.0, initial_phase_rad)):
        beams.append(
            BeamConfig(
                amplitude=1.0,
                noise_model=random_noise_model(
                    recipe.n_components,
                    recipe.band_limit_hz,
                    recipe.max_amplitude_rad,
                    recipe.white_sigma_rad,
                    seed=derived_seed(seed, m),
                ),
                initial_phase_rad=phase,
            )
        )
    pulse_train = None
    if with_pulses:
        pulse_train = PulseTrain(
            f_rep_hz=DEFAULT_F_REP_HZ,
            width_s=DEFAULT_PULSE_WIDTH_S,
            broadened_width_s=DEFAULT_PULSE_WIDTH_S,
            peak=DEFAULT_PULSE_PEAK,
            first_pulse_time_s=first_pulse_time_s,
        )
    controller = None
    if with_controller:
        controller = DitherConfig(
            tones=[
                DitherTone(0.0, 0.0),
                DitherTone(DEFAULT_DITHER_FREQ_HZ, DEFAULT_DITHER_AMP_RAD),
            ],
            integration_period_s=DEFAULT_INTEGRATION_PERIOD_S,
            gain=DEFAULT_GAIN,
            reference_beam=0,
        )
    filt = default_filter_params() if (with_filter and with_pulses) else None
    return ScenarioConfig(
        beams=beams,
        detector=DetectorModel(1.0, 1.0),
        ad_rate_hz=DEFAULT_AD_RATE_HZ,
        internal_rate_hz=DEFAULT_INTERNAL_RATE_HZ,
        duration_s=duration_s,
        seed=seed,
        pulse_train=pulse_train,
        background_level=1.0,
        filter=filt,
        controller=controller,
        noise_recipe=recipe,
    )
