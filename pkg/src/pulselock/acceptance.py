"""Quantitative acceptance battery.

Each criterion is a function returning a :class:`CriterionResult`; the CLI
``assert-paper`` subcommand and the pytest acceptance module both run this
battery, so a shipped build can always re-verify its own headline numbers:

 1. lock within 1 ms and hold, 10 seeds, under 60 s of wall time
 2. final inter-pulse intensity >= 0.9 of the ideal, 10 seeds
 3. first replaced window within 0.1 ms of run start
 4. filtered-vs-raw spectral drops: >= 40 dB near the repetition line,
    >= 20 dB across the band (DC excluded)
 5. bit-identity outside replaced windows, 100 random blocks
 6. difference-ratio matches the direct formula on 1e4 random triples
 7. noise-free pulse-train spectrum is a pure line spectrum (80 dB)
 8. demodulator sign matches sin(dphi) against a quadrature oracle;
    cross-tone leakage below 0.1 % of the ideal intensity
 9. the filter-disabled twin of criterion 2 fails it within 5 ms
10. same seed, byte-identical artifacts
"""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .combiner import simulate_open_loop
from .dither import (
    DitherConfig,
    DitherTone,
    demodulate_error,
    final_intensity_ratio,
    lock_time_s,
    run_closed_loop,
)
from .pulse_filter import FilterState, pollution_ratio, process_block
from .scenario import paper_default_scenario
from .waveform import SampleSeries, peak_in_band, power_spectrum_db

SEEDS = tuple(range(1, 11))

LOCK_TIME_LIMIT_S = 1e-3
LOCK_RUNTIME_LIMIT_S = 60.0
INTENSITY_RATIO_TARGET = 0.9
DETECTION_LATENCY_LIMIT_S = 1e-4
PULSE_BAND_DROP_DB = 40.0
GLOBAL_DROP_DB = 20.0
LINE_SPECTRUM_GAP_DB = 80.0
LEAKAGE_LIMIT_FRACTION = 1e-3
NEGATIVE_CONTROL_DURATION_S = 5e-3


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.name} ({self.detail})"


_closed_loop_cache: dict[int, tuple] = {}


def _closed_loop(seed: int):
    """2 ms paper-default closed-loop run, cached across criteria 1 and 2."""
    if seed not in _closed_loop_cache:
        scenario = paper_default_scenario(seed=seed)
        _closed_loop_cache[seed] = (scenario, run_closed_loop(scenario))
    return _closed_loop_cache[seed]


def criterion_1_lock_time() -> CriterionResult:
    start = time.perf_counter()
    locks = []
    for seed in SEEDS:
        _, result = _closed_loop(seed)
        locks.append(lock_time_s(result.phase_diff, 0.1))
    elapsed = time.perf_counter() - start
    ok = all(t is not None and t <= LOCK_TIME_LIMIT_S for t in locks)
    ok = ok and elapsed < LOCK_RUNTIME_LIMIT_S
    worst = max((t for t in locks if t is not None), default=math.inf)
    detail = f"worst lock {worst * 1e3:.3f} ms over {len(SEEDS)} seeds, {elapsed:.1f} s wall"
    if any(t is None for t in locks):
        detail = "at least one seed never locked; " + detail
    return CriterionResult(1, "lock within 1 ms and hold", ok, detail)


def criterion_2_combining_efficiency() -> CriterionResult:
    ratios = []
    for seed in SEEDS:
        scenario, result = _closed_loop(seed)
        ratios.append(final_intensity_ratio(scenario, result))
    ok = all(r >= INTENSITY_RATIO_TARGET for r in ratios)
    return CriterionResult(
        2,
        "final intensity >= 0.9 of ideal",
        ok,
        f"min ratio {min(ratios):.4f} over {len(SEEDS)} seeds",
    )


def criterion_3_detection_latency() -> CriterionResult:
    scenario = paper_default_scenario(
        seed=1, with_controller=False, first_pulse_time_s=50e-6
    )
    trace = simulate_open_loop(scenario)
    _, _, report = process_block(trace, FilterState(params=scenario.filter))
    latency = report.detection_latency_s
    ok = latency is not None and latency <= DETECTION_LATENCY_LIMIT_S
    return CriterionResult(
        3,
        "first replaced window within 0.1 ms",
        ok,
        f"latency {None if latency is None else f'{latency * 1e6:.1f} us'}",
    )


def criterion_4_spectral_suppression() -> CriterionResult:
    scenario = paper_default_scenario(seed=1, with_controller=False)
    trace = simulate_open_loop(scenario)
    filtered, _, _ = process_block(trace, FilterState(params=scenario.filter))
    before = power_spectrum_db(trace)
    after = power_spectrum_db(filtered)
    df = before.freq_resolution_hz
    # DC carries the (identical) mean power of both traces, not noise;
    # the comparison bands start at the first positive-frequency bin.
    band_drop = peak_in_band(before, 8e3, 12e3)[1] - peak_in_band(after, 8e3, 12e3)[1]
    global_drop = (
        peak_in_band(before, df, 500e3)[1] - peak_in_band(after, df, 500e3)[1]
    )
    ok = band_drop >= PULSE_BAND_DROP_DB and global_drop >= GLOBAL_DROP_DB
    return CriterionResult(
        4,
        "spectral suppression 40 dB band / 20 dB global",
        ok,
        f"8-12 kHz drop {band_drop:.1f} dB, global drop {global_drop:.1f} dB",
    )


def criterion_5_non_pollution_identity() -> CriterionResult:
    clean_ok = 0
    outside_ok = 0
    n_blocks = 100
    for seed in range(1, n_blocks + 1):
        # pulse-free block: output must be the input, bit for bit
        scenario = paper_default_scenario(
            seed=seed, duration_s=0.3e-3, with_pulses=False, with_controller=False
        )
        scenario.filter = paper_default_scenario(seed=seed).filter
        trace = simulate_open_loop(scenario)
        filtered, state, report = process_block(trace, FilterState(params=scenario.filter))
        if (
            np.array_equal(filtered.samples, trace.samples)
            and not report.replaced_ranges
            and state.mode.value == "acquire"
        ):
            clean_ok += 1
        # contaminated block: identity must hold outside reported windows
        scenario_p = paper_default_scenario(
            seed=seed, duration_s=0.3e-3, with_controller=False
        )
        trace_p = simulate_open_loop(scenario_p)
        filtered_p, _, report_p = process_block(
            trace_p, FilterState(params=scenario_p.filter)
        )
        mask = np.ones(len(trace_p), dtype=bool)
        for lo, hi in report_p.replaced_ranges:
            mask[lo : hi + 1] = False
        if np.array_equal(filtered_p.samples[mask], trace_p.samples[mask]):
            outside_ok += 1
    ok = clean_ok == n_blocks and outside_ok == n_blocks
    return CriterionResult(
        5,
        "non-pollution samples bit-identical",
        ok,
        f"{clean_ok}/{n_blocks} clean blocks untouched, "
        f"{outside_ok}/{n_blocks} contaminated blocks identical outside windows",
    )


def criterion_6_ratio_oracle() -> CriterionResult:
    rng = np.random.default_rng(20260808)
    eps = 1e-6
    n = 10_000
    mismatches = 0
    checked = 0
    for _ in range(n):
        y_prev, y, y_next = rng.uniform(-5.0, 5.0, size=3)
        if abs(y - y_prev) < eps:
            continue
        checked += 1
        direct = abs((y - y_next) / (y - y_prev))
        if pollution_ratio(y_prev, y, y_next, eps) != direct:
            mismatches += 1
    ok = mismatches == 0 and checked > 9000
    return CriterionResult(
        6,
        "difference ratio matches direct formula",
        ok,
        f"{checked} active triples, {mismatches} mismatches",
    )


def criterion_7_line_spectrum() -> CriterionResult:
    scenario = paper_default_scenario(
        seed=1, with_noise=False, with_controller=False, with_filter=False
    )
    trace = simulate_open_loop(scenario)
    spectrum = power_spectrum_db(trace)
    df = spectrum.freq_resolution_hz
    f_rep = scenario.pulse_train.f_rep_hz
    levels = spectrum.levels_db
    bins_per_line = int(round(f_rep / df))
    harmonic = np.zeros(len(levels), dtype=bool)
    for k in range(0, len(levels), bins_per_line):
        harmonic[max(0, k - 1) : k + 2] = True  # within one bin of a multiple
    strongest = float(levels[harmonic].max())
    worst_off = float(levels[~harmonic].max())
    gap = strongest - worst_off
    ok = gap >= LINE_SPECTRUM_GAP_DB
    return CriterionResult(
        7,
        "pulse train gives a pure line spectrum",
        ok,
        f"off-harmonic bins {gap:.0f} dB below the strongest line",
    )


def criterion_8_demodulator_gradient() -> CriterionResult:
    fs = 10e6
    period = 5e-5
    freq = 200e3
    amp = 0.2
    config = DitherConfig(
        tones=[DitherTone(0.0, 0.0), DitherTone(freq, amp)],
        integration_period_s=period,
    )
    t = np.arange(round(period * fs)) / fs

    def oracle(dphi: float) -> float:
        val, _ = quad(
            lambda s: (2.0 + 2.0 * np.cos(dphi + amp * np.sin(2 * np.pi * freq * s)))
            * np.sin(2 * np.pi * freq * s),
            0.0,
            period,
            limit=1000,
        )
        return -(2.0 / period) * val

    sign_ok = True
    match_ok = True
    for dphi in (0.2, 0.5, 1.0, 2.0, -0.2, -0.5, -1.0, -2.0):
        x = 2.0 + 2.0 * np.cos(dphi + amp * np.sin(2 * np.pi * freq * t))
        err = demodulate_error(SampleSeries(fs, 0.0, x), config, 1)
        ref = oracle(dphi)
        sign_ok = sign_ok and np.sign(err) == np.sign(np.sin(dphi))
        match_ok = match_ok and abs(err - ref) <= 1e-3 * max(abs(ref), 1e-12)

    config3 = DitherConfig(
        tones=[DitherTone(0.0, 0.0), DitherTone(200e3, amp), DitherTone(240e3, amp)],
        integration_period_s=period,
    )
    x = 2.0 + 2.0 * np.cos(0.7 + amp * np.sin(2 * np.pi * 240e3 * t))
    leak = abs(demodulate_error(SampleSeries(fs, 0.0, x), config3, 1))
    i_max = 4.0
    leak_ok = leak <= LEAKAGE_LIMIT_FRACTION * i_max
    ok = sign_ok and match_ok and leak_ok
    return CriterionResult(
        8,
        "demodulator sign and orthogonality",
        ok,
        f"signs {'ok' if sign_ok else 'WRONG'}, oracle match "
        f"{'ok' if match_ok else 'WRONG'}, leakage {leak:.2e} of {i_max}",
    )


def criterion_9_negative_control() -> CriterionResult:
    ratios = []
    for seed in SEEDS:
        scenario = paper_default_scenario(
            seed=seed, duration_s=NEGATIVE_CONTROL_DURATION_S, with_filter=False
        )
        result = run_closed_loop(scenario)
        ratios.append(final_intensity_ratio(scenario, result))
    failing = sum(1 for r in ratios if r < INTENSITY_RATIO_TARGET)
    ok = failing > 0
    return CriterionResult(
        9,
        "filter-disabled twin fails the efficiency target",
        ok,
        f"{failing}/{len(SEEDS)} seeds below {INTENSITY_RATIO_TARGET} "
        f"(min {min(ratios):.3f}, max {max(ratios):.3f})",
    )


def criterion_10_determinism() -> CriterionResult:
    from .cli import run_scenario

    mismatched: list[str] = []
    with tempfile.TemporaryDirectory() as tmp:
        for kind in ("filter-only", "closed-loop"):
            dirs = []
            for tag in ("a", "b"):
                scenario = paper_default_scenario(seed=3)
                if kind == "filter-only":
                    scenario.controller = None
                out = Path(tmp) / f"{kind}-{tag}"
                run_scenario(kind, scenario, out, plots=False)
                dirs.append(out)
            names = sorted(p.name for p in dirs[0].iterdir())
            _, diff, funny = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
            mismatched.extend(f"{kind}/{n}" for n in diff + funny)
    ok = not mismatched
    return CriterionResult(
        10,
        "same seed, byte-identical artifacts",
        ok,
        "all files identical" if ok else f"mismatches: {mismatched}",
    )


ALL_CRITERIA = (
    criterion_1_lock_time,
    criterion_2_combining_efficiency,
    criterion_3_detection_latency,
    criterion_4_spectral_suppression,
    criterion_5_non_pollution_identity,
    criterion_6_ratio_oracle,
    criterion_7_line_spectrum,
    criterion_8_demodulator_gradient,
    criterion_9_negative_control,
    criterion_10_determinism,
)


def run_all(verbose: bool = False) -> list[CriterionResult]:
    results = []
    for check in ALL_CRITERIA:
        result = check()
        results.append(result)
        if verbose:
            print(result.line())
    return results
