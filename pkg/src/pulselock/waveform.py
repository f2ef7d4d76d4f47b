"""Uniformly sampled signals and their discrete power spectra.

The two containers here (:class:`SampleSeries`, :class:`PowerSpectrum`) are
the currency of every other module: the simulator produces detector traces
as ``SampleSeries``, the filter rewrites them, and the analysis side turns
them into one-sided power spectra in dB.

Spectrum conventions
--------------------
Levels are ``10*log10(P_k)`` relative to a fixed reference of 1 unit^2 and
clamped at -300 dB.  With no taper the one-sided linear bins satisfy
Parseval exactly: ``sum_k P_k == mean(x**2)``.  A bin-centred tone of
amplitude ``A`` reads ``A**2 / 2`` regardless of taper (coherent-gain
normalisation), which keeps before/after level deltas comparable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidBandError, InvalidInputError

DB_FLOOR = -300.0
_LINEAR_FLOOR = 10.0 ** (DB_FLOOR / 10.0)

TAPERS = ("none", "hann")


@dataclass
class SampleSeries:
    """Real-valued waveform on a uniform time grid.

    Sample ``i`` sits at ``t0_s + i / sample_rate_hz``.  Units of the
    samples are whatever the producer put in (radians, intensity, amps).
    """

    sample_rate_hz: float
    t0_s: float
    samples: np.ndarray

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise InvalidInputError(
                f"sample_rate_hz must be positive, got {self.sample_rate_hz}"
            )
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise InvalidInputError("samples must be one-dimensional")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def dt_s(self) -> float:
        return 1.0 / self.sample_rate_hz

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(self.samples.size) / self.sample_rate_hz

    def copy(self) -> "SampleSeries":
        return SampleSeries(self.sample_rate_hz, self.t0_s, self.samples.copy())


@dataclass
class PowerSpectrum:
    """One-sided power spectrum in dB, floor-clamped.

    ``levels_db[k]`` is the level at frequency ``k * freq_resolution_hz``.
    """

    freq_resolution_hz: float
    levels_db: np.ndarray
    floor_db: float = DB_FLOOR

    def __post_init__(self) -> None:
        self.levels_db = np.asarray(self.levels_db, dtype=np.float64)

    def __len__(self) -> int:
        return self.levels_db.size

    def frequencies(self) -> np.ndarray:
        return np.arange(self.levels_db.size) * self.freq_resolution_hz

    @property
    def max_frequency_hz(self) -> float:
        return (self.levels_db.size - 1) * self.freq_resolution_hz


def power_spectrum_db(series: SampleSeries, taper: str = "none") -> PowerSpectrum:
    """One-sided magnitude-squared DFT of ``series`` in dB.

    Parameters
    ----------
    series : SampleSeries
        Non-empty input waveform.
    taper : {"none", "hann"}
        "none" keeps line spectra of integer-period signals exact;
        "hann" trades that exactness for leakage control on noisy data.
    """
    if len(series) == 0:
        raise InvalidInputError("cannot compute the spectrum of an empty series")
    if taper not in TAPERS:
        raise InvalidInputError(f"unknown taper {taper!r}, expected one of {TAPERS}")

    x = series.samples
    n = x.size
    if taper == "hann":
        w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)
        spec = np.fft.rfft(x * w)
        scale = w.sum()
    else:
        spec = np.fft.rfft(x)
        scale = float(n)

    power = np.abs(spec / scale) ** 2
    # Fold negative frequencies: double all bins except DC and, for even n,
    # the Nyquist bin (each appears once in the two-sided spectrum).
    if power.size > 1:
        power[1:] *= 2.0
        if n % 2 == 0:
            power[-1] *= 0.5

    levels = 10.0 * np.log10(np.maximum(power, _LINEAR_FLOOR))
    levels = np.maximum(levels, DB_FLOOR)
    return PowerSpectrum(series.sample_rate_hz / n, levels)


def peak_in_band(
    spectrum: PowerSpectrum, f_lo: float, f_hi: float
) -> tuple[float, float]:
    """Frequency and level of the strongest bin with ``f_lo <= f <= f_hi``.

    Ties break toward the lowest frequency so the result is deterministic.
    """
    if not 0.0 <= f_lo < f_hi:
        raise InvalidBandError(f"invalid band [{f_lo}, {f_hi}] Hz")
    df = spectrum.freq_resolution_hz
    f_max = spectrum.max_frequency_hz
    if f_hi > f_max * (1.0 + 1e-12) + 1e-12:
        raise InvalidBandError(
            f"band edge {f_hi} Hz exceeds the spectrum limit {f_max} Hz"
        )
    lo = int(math.ceil(f_lo / df - 1e-9))
    hi = int(math.floor(f_hi / df + 1e-9))
    hi = min(hi, len(spectrum) - 1)
    if lo > hi:
        raise InvalidBandError(f"band [{f_lo}, {f_hi}] Hz contains no bins")
    window = spectrum.levels_db[lo : hi + 1]
    k = lo + int(np.argmax(window))  # argmax returns the first (lowest) maximum
    return k * df, float(spectrum.levels_db[k])


def _fmt(value: float) -> str:
    # repr of a Python float is the shortest round-trip form: byte-stable
    # output and exact reload.
    return repr(float(value))


def write_series_csv(series: SampleSeries, path, value_label: str = "value") -> None:
    """Write ``t_s,<value_label>`` rows with LF line endings."""
    t = series.times()
    with open(path, "w", newline="\n") as f:
        f.write(f"t_s,{value_label}\n")
        for ti, vi in zip(t, series.samples):
            f.write(f"{_fmt(ti)},{_fmt(vi)}\n")


def read_series_csv(path) -> SampleSeries:
    """Load a series written by :func:`write_series_csv`."""
    t: list[float] = []
    v: list[float] = []
    with open(path, "r", newline="") as f:
        header = f.readline()
        if not header.startswith("t_s,"):
            raise InvalidInputError(f"{path}: not a series CSV (header {header!r})")
        for line in f:
            line = line.strip()
            if not line:
                continue
            a, b = line.split(",")
            t.append(float(a))
            v.append(float(b))
    if len(t) < 2:
        raise InvalidInputError(f"{path}: need at least two samples")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-6, atol=0.0):
        raise InvalidInputError(f"{path}: time grid is not uniform")
    return SampleSeries(1.0 / float(np.median(dt)), t[0], np.array(v))


def write_spectrum_csv(spectrum: PowerSpectrum, path) -> None:
    """Write ``freq_hz,level_db`` rows with LF line endings."""
    freqs = spectrum.frequencies()
    with open(path, "w", newline="\n") as f:
        f.write("freq_hz,level_db\n")
        for fi, li in zip(freqs, spectrum.levels_db):
            f.write(f"{_fmt(fi)},{_fmt(li)}\n")


def read_spectrum_csv(path) -> PowerSpectrum:
    """Load a spectrum written by :func:`write_spectrum_csv`."""
    freqs: list[float] = []
    levels: list[float] = []
    with open(path, "r", newline="") as f:
        header = f.readline()
        if not header.startswith("freq_hz,"):
            raise InvalidInputError(f"{path}: not a spectrum CSV (header {header!r})")
        for line in f:
            line = line.strip()
            if not line:
                continue
            a, b = line.split(",")
            freqs.append(float(a))
            levels.append(float(b))
    if len(freqs) < 2:
        raise InvalidInputError(f"{path}: need at least two bins")
    return PowerSpectrum(freqs[1] - freqs[0], np.array(levels))
