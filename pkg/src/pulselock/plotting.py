"""Render run artifacts to PNG figures.

Everything here reads the delimited artifacts back from disk, so a figure
can always be regenerated from a run directory alone.  The Agg backend is
forced: runs are headless and figures go to files next to the CSVs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .waveform import read_series_csv, read_spectrum_csv

_FIGSIZE = (8.0, 4.0)
_DPI = 150


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def plot_series_csv(csv_path, png_path, ylabel: str = "intensity", title: str = "") -> None:
    series = read_series_csv(csv_path)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(series.times() * 1e3, series.samples, lw=0.6)
    ax.set_xlabel("time (ms)")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    _save(fig, Path(png_path))


def plot_spectrum_csv(csv_path, png_path, f_max_hz: float | None = None, title: str = "") -> None:
    spectrum = read_spectrum_csv(csv_path)
    freqs = spectrum.frequencies()
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(freqs * 1e-3, spectrum.levels_db, lw=0.6)
    if f_max_hz is not None:
        ax.set_xlim(0, f_max_hz * 1e-3)
    ax.set_xlabel("frequency (kHz)")
    ax.set_ylabel("level (dB)")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    _save(fig, Path(png_path))


def plot_series_pair(
    csv_a, csv_b, png_path, labels=("before", "after"), ylabel="intensity", title=""
) -> None:
    a = read_series_csv(csv_a)
    b = read_series_csv(csv_b)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(a.times() * 1e3, a.samples, lw=0.6, label=labels[0])
    ax.plot(b.times() * 1e3, b.samples, lw=0.6, label=labels[1])
    ax.set_xlabel("time (ms)")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right")
    ax.grid(alpha=0.3)
    _save(fig, Path(png_path))


def plot_spectrum_pair(
    csv_a, csv_b, png_path, labels=("before", "after"), f_max_hz=None, title=""
) -> None:
    a = read_spectrum_csv(csv_a)
    b = read_spectrum_csv(csv_b)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(a.frequencies() * 1e-3, a.levels_db, lw=0.6, label=labels[0])
    ax.plot(b.frequencies() * 1e-3, b.levels_db, lw=0.6, label=labels[1])
    if f_max_hz is not None:
        ax.set_xlim(0, f_max_hz * 1e-3)
    ax.set_xlabel("frequency (kHz)")
    ax.set_ylabel("level (dB)")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right")
    ax.grid(alpha=0.3)
    _save(fig, Path(png_path))


def render_run_figures(out_dir, kind: str) -> list[Path]:
    """Render the standard figures for a run directory; returns the paths."""
    out = Path(out_dir)
    made: list[Path] = []

    def have(name: str) -> bool:
        return (out / name).exists()

    if kind in ("open-loop", "filter-only"):
        n_beams = 0
        while have(f"noise_beam{n_beams}.csv"):
            n_beams += 1
        for m in range(n_beams):
            p = out / f"noise_beam{m}.png"
            plot_series_csv(out / f"noise_beam{m}.csv", p, ylabel="phase (rad)",
                            title=f"beam {m} phase noise")
            made.append(p)
            p = out / f"noise_beam{m}_spectrum.png"
            plot_spectrum_csv(out / f"noise_beam{m}_spectrum.csv", p, f_max_hz=10e3,
                              title=f"beam {m} phase-noise spectrum")
            made.append(p)
        p = out / "combined.png"
        plot_series_csv(out / "combined.csv", p, title="combined detector signal")
        made.append(p)
        p = out / "combined_spectrum.png"
        plot_spectrum_csv(out / "combined_spectrum.csv", p, f_max_hz=500e3,
                          title="combined signal spectrum")
        made.append(p)
    if kind == "filter-only":
        p = out / "filtering.png"
        plot_series_pair(out / "combined.csv", out / "filtered.csv", p,
                         labels=("unfiltered", "filtered"),
                         title="pulse windows replaced by interpolation")
        made.append(p)
        p = out / "spectra_compare.png"
        plot_spectrum_pair(out / "combined_spectrum.csv", out / "filtered_spectrum.csv",
                           p, labels=("unfiltered", "filtered"), f_max_hz=500e3,
                           title="spectral suppression of pulse lines")
        made.append(p)
    if kind == "closed-loop":
        p = out / "intensity.png"
        plot_series_csv(out / "intensity.csv", p, title="combined intensity, closed loop")
        made.append(p)
        p = out / "phase_diff.png"
        plot_series_csv(out / "phase_diff.csv", p, ylabel="phase difference (rad)",
                        title="beam phase difference during locking")
        made.append(p)
    if kind == "synth-noise":
        p = out / "noise.png"
        plot_series_csv(out / "noise.csv", p, ylabel="phase (rad)", title="phase noise")
        made.append(p)
        p = out / "noise_spectrum.png"
        plot_spectrum_csv(out / "noise_spectrum.csv", p, f_max_hz=10e3,
                          title="phase-noise spectrum")
        made.append(p)
    return made
