"""pulselock: pulsed-beam coherent combining with adaptive pulse filtering.

The package simulates the full chain at desk scale: per-beam phase noise,
coherent superposition of pulsed beams on a single detector, window-based
removal of the periodic pulse contamination, and multi-dither closed-loop
phase locking, plus a CLI that turns scenarios into CSV/JSON artifacts and
figures.
"""

from .combiner import (
    BeamConfig,
    DetectorModel,
    PulseTrain,
    ad_sample,
    combined_intensity,
    detector_current,
    pulse_envelope,
    simulate_open_loop,
)
from .dither import (
    ClosedLoopResult,
    ControllerState,
    DitherConfig,
    DitherTone,
    controller_step,
    demodulate_error,
    dither_phase,
    run_closed_loop,
    wrap_phase,
)
from .errors import InvalidBandError, InvalidInputError, ScenarioError
from .noise import (
    NoiseModel,
    SinusoidComponent,
    random_noise_model,
    synth_phase_noise,
)
from .pulse_filter import (
    DetectorParams,
    FilterMode,
    FilterReport,
    FilterState,
    interpolate_window,
    is_pulse_width,
    pollution_ratio,
    process_block,
)
from .scenario import ScenarioConfig, paper_default_scenario
from .waveform import (
    PowerSpectrum,
    SampleSeries,
    peak_in_band,
    power_spectrum_db,
)

__version__ = "0.1.0"

__all__ = [
    "BeamConfig",
    "ClosedLoopResult",
    "ControllerState",
    "DetectorModel",
    "DetectorParams",
    "DitherConfig",
    "DitherTone",
    "FilterMode",
    "FilterReport",
    "FilterState",
    "InvalidBandError",
    "InvalidInputError",
    "NoiseModel",
    "PowerSpectrum",
    "PulseTrain",
    "SampleSeries",
    "ScenarioConfig",
    "ScenarioError",
    "SinusoidComponent",
    "ad_sample",
    "combined_intensity",
    "controller_step",
    "demodulate_error",
    "detector_current",
    "dither_phase",
    "interpolate_window",
    "is_pulse_width",
    "paper_default_scenario",
    "peak_in_band",
    "pollution_ratio",
    "power_spectrum_db",
    "process_block",
    "pulse_envelope",
    "random_noise_model",
    "run_closed_loop",
    "simulate_open_loop",
    "synth_phase_noise",
    "wrap_phase",
    "__version__",
]
