"""Scenario runner: one subcommand per experiment, files out.

Subcommands
-----------
synth-noise   generate a phase-noise waveform and its spectrum
run           run a scenario (--kind open-loop | filter-only | closed-loop)
spectrum      compute the spectrum CSV of a series CSV
compare       peak-level delta between two spectrum CSVs in a band
sweep         run one scenario kind across many seeds
assert-paper  run the full acceptance battery (exit 3 on any failure)

All data artifacts are CSV/JSON and byte-reproducible for a given seed;
figures are rendered next to them unless ``--no-plots`` is given.  The
environment variable ``PULSELOCK_OUT`` re-roots relative output paths.

Exit codes: 0 success, 2 invalid configuration, 3 acceptance-check
failure, 1 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .combiner import simulate_open_loop
from .dither import (
    final_intensity_ratio,
    lock_time_s,
    pulse_peak_ratios,
    run_closed_loop,
)
from .errors import InvalidInputError, ScenarioError
from .noise import random_noise_model, synth_phase_noise
from .pulse_filter import FilterState, process_block
from .scenario import (
    DEFAULT_NOISE_BAND_HZ,
    DEFAULT_NOISE_COMPONENTS,
    DEFAULT_WHITE_SIGMA_RAD,
    ScenarioConfig,
    paper_default_scenario,
)
from .waveform import (
    peak_in_band,
    power_spectrum_db,
    read_series_csv,
    read_spectrum_csv,
    write_series_csv,
    write_spectrum_csv,
)

RUN_KINDS = ("open-loop", "filter-only", "closed-loop")

LOCK_THRESHOLD_RAD = 0.1
TARGET_INTENSITY_RATIO = 0.9
TARGET_LOCK_TIME_S = 1e-3
TARGET_DETECTION_LATENCY_S = 1e-4


def resolve_out_dir(out: str | None, default_name: str) -> Path:
    """Apply the PULSELOCK_OUT root to relative (or defaulted) paths."""
    root = os.environ.get("PULSELOCK_OUT", "")
    path = Path(out) if out else Path("runs") / default_name
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def write_json(data: dict, path: Path) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def load_scenario(args, kind: str) -> ScenarioConfig:
    """Scenario from --config (JSON) or the stock defaults, then overrides."""
    if getattr(args, "config", None):
        scenario = ScenarioConfig.from_json(args.config)
        if args.seed is not None:
            scenario = scenario.with_seed(args.seed)
    else:
        seed = args.seed if args.seed is not None else 1
        scenario = paper_default_scenario(seed=seed)
    if getattr(args, "duration_s", None):
        scenario.duration_s = args.duration_s
    if kind in ("open-loop", "filter-only"):
        # Figure-style open-loop runs look at noise plus pulses alone; the
        # dither tag belongs to the closed loop.
        scenario.controller = None
    if kind == "closed-loop" and scenario.controller is None:
        raise ScenarioError("closed-loop runs need a controller block")
    if kind in ("filter-only", "closed-loop") and scenario.pulse_train is None:
        raise ScenarioError(f"{kind} runs need a pulse train")
    return scenario


def _noise_artifacts(scenario: ScenarioConfig, out: Path) -> None:
    for m, beam in enumerate(scenario.beams):
        series = synth_phase_noise(
            beam.noise_model, scenario.duration_s, scenario.ad_rate_hz
        )
        write_series_csv(series, out / f"noise_beam{m}.csv", value_label="rad")
        write_spectrum_csv(power_spectrum_db(series), out / f"noise_beam{m}_spectrum.csv")


def run_open_loop(scenario: ScenarioConfig, out: Path) -> dict:
    trace = simulate_open_loop(scenario)
    write_series_csv(trace, out / "combined.csv")
    spectrum = power_spectrum_db(trace)
    write_spectrum_csv(spectrum, out / "combined_spectrum.csv")
    _noise_artifacts(scenario, out)
    df = spectrum.freq_resolution_hz
    summary = {
        "kind": "open-loop",
        "pulse_band_peak_db": peak_in_band(spectrum, 8e3, 12e3)[1],
        "noise_band_peak_db": peak_in_band(spectrum, df, 5e3)[1],
        "global_peak_db": peak_in_band(spectrum, df, min(500e3, spectrum.max_frequency_hz))[1],
    }
    return summary


def run_filter_only(scenario: ScenarioConfig, out: Path) -> dict:
    summary = run_open_loop(scenario, out)
    trace = read_series_csv(out / "combined.csv")
    filtered, _, report = process_block(trace, FilterState(params=scenario.filter))
    write_series_csv(filtered, out / "filtered.csv")
    spectrum_after = power_spectrum_db(filtered)
    write_spectrum_csv(spectrum_after, out / "filtered_spectrum.csv")
    write_json(report.to_dict(), out / "filter_report.json")
    df = spectrum_after.freq_resolution_hz
    f_hi = min(500e3, spectrum_after.max_frequency_hz)
    summary.update(
        {
            "kind": "filter-only",
            "detection_latency_s": report.detection_latency_s,
            "replaced_windows": len(report.replaced_ranges),
            "reacquisitions": report.reacquisitions,
            "pulse_band_drop_db": summary["pulse_band_peak_db"]
            - peak_in_band(spectrum_after, 8e3, 12e3)[1],
            "global_drop_db": summary["global_peak_db"]
            - peak_in_band(spectrum_after, df, f_hi)[1],
        }
    )
    return summary


def run_closed(scenario: ScenarioConfig, out: Path) -> dict:
    result = run_closed_loop(scenario)
    write_series_csv(result.intensity, out / "intensity.csv")
    write_series_csv(result.phase_diff, out / "phase_diff.csv", value_label="rad")
    write_json(result.report.to_dict(), out / "filter_report.json")
    lock = lock_time_s(result.phase_diff, LOCK_THRESHOLD_RAD)
    ratio = final_intensity_ratio(scenario, result)
    _, peaks = pulse_peak_ratios(scenario, result)
    times, _ = pulse_peak_ratios(scenario, result)
    after_lock = peaks[times >= lock] if (lock is not None and peaks.size) else np.empty(0)
    cfg = scenario.controller
    summary = {
        "kind": "closed-loop",
        "lock_time_s": lock,
        "lock_threshold_rad": LOCK_THRESHOLD_RAD,
        "final_intensity_ratio": ratio,
        "min_pulse_peak_ratio_after_lock": (
            float(after_lock.min()) if after_lock.size else None
        ),
        "filter_enabled": scenario.filter is not None,
        "controller": cfg.to_dict(),
    }
    return summary


_RUNNERS = {
    "open-loop": run_open_loop,
    "filter-only": run_filter_only,
    "closed-loop": run_closed,
}


def run_scenario(kind: str, scenario: ScenarioConfig, out_dir, plots: bool = True) -> dict:
    """Run one scenario kind and write its artifact directory.

    The directory is self-describing: ``config.json`` echoes the exact
    configuration, and every summary value is recomputable from the CSVs.
    """
    if kind not in RUN_KINDS:
        raise InvalidInputError(f"unknown run kind {kind!r}")
    scenario.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario.to_json(out / "config.json")
    summary = _RUNNERS[kind](scenario, out)
    summary["seed"] = scenario.seed
    write_json(summary, out / "summary.json")
    if plots:
        plotting.render_run_figures(out, kind)
    return summary


def compare_spectra(before_path, after_path, f_lo: float, f_hi: float) -> float:
    """Peak-level drop (before minus after) within a band, matching grids."""
    before = read_spectrum_csv(before_path)
    after = read_spectrum_csv(after_path)
    if len(before) != len(after) or not np.isclose(
        before.freq_resolution_hz, after.freq_resolution_hz, rtol=1e-12, atol=0.0
    ):
        raise InvalidInputError("spectra are on different frequency grids")
    return peak_in_band(before, f_lo, f_hi)[1] - peak_in_band(after, f_lo, f_hi)[1]


def _assert_run(kind: str, summary: dict) -> list[str]:
    """Headline checks for ``run --assert``; returns failure strings."""
    failures = []
    if kind == "closed-loop":
        lock = summary["lock_time_s"]
        if lock is None or lock > TARGET_LOCK_TIME_S:
            failures.append(f"lock_time_s={lock} exceeds {TARGET_LOCK_TIME_S}")
        if summary["final_intensity_ratio"] < TARGET_INTENSITY_RATIO:
            failures.append(
                f"final_intensity_ratio={summary['final_intensity_ratio']:.4f} "
                f"below {TARGET_INTENSITY_RATIO}"
            )
    elif kind == "filter-only":
        lat = summary["detection_latency_s"]
        if lat is None or lat > TARGET_DETECTION_LATENCY_S:
            failures.append(f"detection_latency_s={lat} exceeds {TARGET_DETECTION_LATENCY_S}")
    elif kind == "open-loop":
        if summary["pulse_band_peak_db"] <= summary["noise_band_peak_db"]:
            failures.append("pulse lines do not dominate the noise band")
    return failures


# -- subcommand handlers -----------------------------------------------------


def _cmd_synth_noise(args) -> int:
    out = resolve_out_dir(args.out, "synth-noise")
    out.mkdir(parents=True, exist_ok=True)
    model = random_noise_model(
        args.components, args.band_hz, args.max_amp_rad, args.white_sigma_rad,
        seed=args.seed,
    )
    series = synth_phase_noise(model, args.duration_s, args.rate_hz)
    write_json(model.to_dict(), out / "noise_model.json")
    write_series_csv(series, out / "noise.csv", value_label="rad")
    write_spectrum_csv(power_spectrum_db(series, taper=args.taper), out / "noise_spectrum.csv")
    if not args.no_plots:
        plotting.render_run_figures(out, "synth-noise")
    print(f"wrote noise artifacts to {out}")
    return 0


def _cmd_run(args) -> int:
    scenario = load_scenario(args, args.kind)
    out = resolve_out_dir(args.out, args.kind)
    summary = run_scenario(args.kind, scenario, out, plots=not args.no_plots)
    print(f"wrote {args.kind} artifacts to {out}")
    for key, value in sorted(summary.items()):
        if key not in ("controller", "kind"):
            print(f"  {key}: {value}")
    if args.assert_targets:
        failures = _assert_run(args.kind, summary)
        for failure in failures:
            print(f"ASSERT FAIL: {failure}", file=sys.stderr)
        if failures:
            return 3
    return 0


def _cmd_spectrum(args) -> int:
    series = read_series_csv(args.series)
    spectrum = power_spectrum_db(series, taper=args.taper)
    out = Path(args.out) if args.out else Path(args.series).with_suffix(".spectrum.csv")
    write_spectrum_csv(spectrum, out)
    print(f"wrote spectrum ({len(spectrum)} bins, df={spectrum.freq_resolution_hz} Hz) to {out}")
    return 0


def _cmd_compare(args) -> int:
    drop = compare_spectra(args.before, args.after, args.f_lo, args.f_hi)
    print(f"peak drop in [{args.f_lo}, {args.f_hi}] Hz: {drop:.3f} dB")
    if args.min_drop_db is not None and drop < args.min_drop_db:
        print(f"ASSERT FAIL: drop {drop:.3f} dB below {args.min_drop_db} dB", file=sys.stderr)
        return 3
    return 0


def _cmd_sweep(args) -> int:
    out = resolve_out_dir(args.out, f"sweep-{args.kind}")
    out.mkdir(parents=True, exist_ok=True)
    seeds = args.seeds or list(range(1, args.num_seeds + 1))
    rows = {}
    worst = 0
    for seed in seeds:
        sub_args = argparse.Namespace(
            config=args.config, seed=seed, duration_s=args.duration_s
        )
        scenario = load_scenario(sub_args, args.kind)
        summary = run_scenario(
            args.kind, scenario, out / f"seed_{seed:04d}", plots=not args.no_plots
        )
        rows[str(seed)] = summary
        if args.assert_targets:
            failures = _assert_run(args.kind, summary)
            for failure in failures:
                print(f"ASSERT FAIL (seed {seed}): {failure}", file=sys.stderr)
            worst = 3 if failures else worst
        print(f"seed {seed}: done")
    write_json(rows, out / "sweep_summary.json")
    print(f"wrote sweep artifacts to {out}")
    return worst


def _cmd_assert_paper(args) -> int:
    from .acceptance import run_all

    results = run_all(verbose=True)
    return 0 if all(r.passed for r in results) else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulselock",
        description="Pulsed-beam coherent combining: simulation, filtering, locking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-noise", help="generate a phase-noise waveform")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--components", type=int, default=DEFAULT_NOISE_COMPONENTS)
    p.add_argument("--band-hz", type=float, default=DEFAULT_NOISE_BAND_HZ)
    p.add_argument("--max-amp-rad", type=float, default=2.0 * np.pi / 20.0)
    p.add_argument("--white-sigma-rad", type=float, default=DEFAULT_WHITE_SIGMA_RAD)
    p.add_argument("--duration-s", type=float, default=20e-3)
    p.add_argument("--rate-hz", type=float, default=10e6)
    p.add_argument("--taper", choices=("none", "hann"), default="none")
    p.add_argument("--out", default=None)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_synth_noise)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("--kind", choices=RUN_KINDS, required=True)
    p.add_argument("--config", default=None, help="scenario JSON (defaults to stock)")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--duration-s", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--assert", dest="assert_targets", action="store_true",
                   help="exit 3 unless the kind's headline targets hold")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("spectrum", help="spectrum CSV of a series CSV")
    p.add_argument("series")
    p.add_argument("--taper", choices=("none", "hann"), default="none")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("compare", help="band peak drop between two spectra")
    p.add_argument("before")
    p.add_argument("after")
    p.add_argument("--f-lo", type=float, required=True)
    p.add_argument("--f-hi", type=float, required=True)
    p.add_argument("--min-drop-db", type=float, default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("sweep", help="run a scenario kind across seeds")
    p.add_argument("--kind", choices=RUN_KINDS, required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seeds", type=int, nargs="*", default=None)
    p.add_argument("--num-seeds", type=int, default=10)
    p.add_argument("--duration-s", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--assert", dest="assert_targets", action="store_true")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("assert-paper", help="run the acceptance battery")
    p.set_defaults(func=_cmd_assert_paper)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, InvalidInputError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
