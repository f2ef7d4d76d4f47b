"""Adaptive window filtering of periodic pulse contamination.

Slow noise is locally smooth: adjacent samples differ by little, so the
ratio of the forward to the backward difference around a sample stays near
one.  A pulse edge breaks that symmetry, and at a sampling rate where each
pulse covers at most a handful of points the contaminated samples are
isolated, large, and strictly periodic.  The filter exploits all three
properties with a three-phase state machine:

ACQUIRE
    Scan sample by sample for a candidate: difference-ratio above the
    threshold, amplitude above the voltage threshold, and enough
    consecutive high samples to be a pulse rather than a noise outlier.
    The first candidate becomes the anchor, its window is interpolated
    away immediately, and the machine moves to CONFIRM.
CONFIRM
    Predict the next window one pulse period after the anchor.  Each
    in-window detection advances the anchor and interpolates the window;
    after ``confirm_count`` consecutive hits the periodicity is trusted
    and the machine enters TRACK.  A miss drops straight back to ACQUIRE.
TRACK
    Every predicted window is interpolated whether or not a pulse is seen.
    Detections re-centre the anchor on the in-window peak so slow timing
    drift is followed; ``miss_limit`` consecutive empty windows mean the
    train moved, and the machine re-enters ACQUIRE (one reacquisition).

Samples outside interpolated windows are passed through bit-identical.
Detection always reads the raw (unfiltered) stream.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError
from .waveform import SampleSeries


class FilterMode(enum.Enum):
    ACQUIRE = "acquire"
    CONFIRM = "confirm"
    TRACK = "track"


@dataclass
class DetectorParams:
    """Detection and window-scheduling parameters.

    ``eps`` and ``v_threshold`` may be left as ``None``: the denominator
    guard then scales with the block (1e-9 of its largest magnitude) and
    the voltage threshold is re-estimated each block as median + 8*MAD of
    the most recent period of raw samples, statistics robust enough that
    the rare pulse samples cannot poison them.
    """

    period_samples: int
    window_width_samples: int = 1
    ratio_threshold: float = 2.0
    eps: float | None = None
    width_fraction: float = 0.9
    v_threshold: float | None = None
    min_pulse_samples: int = 1
    confirm_count: int = 5
    miss_limit: int = 3

    def __post_init__(self) -> None:
        if self.period_samples <= self.window_width_samples:
            raise InvalidInputError("period_samples must exceed window_width_samples")
        if self.window_width_samples < self.min_pulse_samples:
            raise InvalidInputError("window narrower than the expected pulse")
        if self.window_width_samples < 1 or self.min_pulse_samples < 1:
            raise InvalidInputError("window and pulse sample counts must be >= 1")
        if self.ratio_threshold <= 0:
            raise InvalidInputError("ratio_threshold must be positive")
        if not 0.8 <= self.width_fraction <= 1.0:
            raise InvalidInputError("width_fraction must lie in [0.8, 1.0]")
        if self.confirm_count < 1 or self.miss_limit < 1:
            raise InvalidInputError("confirm_count and miss_limit must be >= 1")
        if self.eps is not None and self.eps <= 0:
            raise InvalidInputError("eps must be positive when given")

    @classmethod
    def for_pulse_train(
        cls,
        f_rep_hz: float,
        broadened_width_s: float,
        sample_rate_hz: float,
        window_width_s: float | None = None,
        **overrides,
    ) -> "DetectorParams":
        """Derive sample counts from pulse timing.

        The expected in-pulse sample count is ``width_fraction * f_s * tau``
        (at least one); the window defaults to ten pulse widths, again at
        least one sample.
        """
        width_fraction = overrides.pop("width_fraction", 0.9)
        if window_width_s is None:
            window_width_s = 10.0 * broadened_width_s
        n_p = max(1, math.floor(width_fraction * sample_rate_hz * broadened_width_s))
        window = max(1, round(window_width_s * sample_rate_hz))
        period = round(sample_rate_hz / f_rep_hz)
        return cls(
            period_samples=period,
            window_width_samples=window,
            width_fraction=width_fraction,
            min_pulse_samples=n_p,
            **overrides,
        )

    def to_dict(self) -> dict:
        return {
            "period_samples": self.period_samples,
            "window_width_samples": self.window_width_samples,
            "ratio_threshold": self.ratio_threshold,
            "eps": self.eps,
            "width_fraction": self.width_fraction,
            "v_threshold": self.v_threshold,
            "min_pulse_samples": self.min_pulse_samples,
            "confirm_count": self.confirm_count,
            "miss_limit": self.miss_limit,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorParams":
        return cls(**d)


@dataclass
class FilterState:
    """State carried between blocks of one stream.

    ``anchor_index`` and window bookkeeping are absolute sample indices of
    the stream; ``_tail``/``_recent`` hold raw history so detection is
    seamless across block boundaries.
    """

    params: DetectorParams
    mode: FilterMode = FilterMode.ACQUIRE
    anchor_index: int = -1
    confirmations: int = 0
    misses: int = 0
    stream_pos: int = 0
    stream_t0_s: float = 0.0
    _tail: np.ndarray = field(default_factory=lambda: np.empty(0))
    _recent: np.ndarray = field(default_factory=lambda: np.empty(0))

    def copy(self) -> "FilterState":
        return replace(self, _tail=self._tail.copy(), _recent=self._recent.copy())


@dataclass
class FilterReport:
    """What one processing pass replaced and how the schedule behaved."""

    replaced_ranges: list[tuple[int, int]] = field(default_factory=list)
    detection_latency_s: float | None = None
    reacquisitions: int = 0

    def merge(self, other: "FilterReport") -> "FilterReport":
        return FilterReport(
            replaced_ranges=self.replaced_ranges + other.replaced_ranges,
            detection_latency_s=(
                self.detection_latency_s
                if self.detection_latency_s is not None
                else other.detection_latency_s
            ),
            reacquisitions=self.reacquisitions + other.reacquisitions,
        )

    def to_dict(self) -> dict:
        return {
            "replaced_ranges": [list(r) for r in self.replaced_ranges],
            "detection_latency_s": self.detection_latency_s,
            "reacquisitions": self.reacquisitions,
        }


def pollution_ratio(y_prev: float, y: float, y_next: float, eps: float) -> float:
    """Forward-to-backward difference ratio around ``y``.

    Near one for smooth noise, large at a pulse edge.  A locally constant
    triple counts as clean (0.0); a flat history followed by a jump has no
    usable denominator and returns the +inf sentinel.
    """
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    d_prev = abs(y - y_prev)
    d_next = abs(y - y_next)
    if d_prev < eps:
        return 0.0 if d_next < eps else math.inf
    return d_next / d_prev


def is_pulse_width(samples, v_threshold: float, min_pulse_samples: int) -> bool:
    """True when at least ``min_pulse_samples`` consecutive samples reach
    ``v_threshold``; isolated high points are noise outliers, not pulses."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < min_pulse_samples:
        raise InvalidInputError(
            f"slice of {x.size} samples cannot hold {min_pulse_samples} pulse points"
        )
    run = 0
    for v in x:
        run = run + 1 if v >= v_threshold else 0
        if run >= min_pulse_samples:
            return True
    return False


def interpolate_window(series: SampleSeries, start: int, end: int) -> SampleSeries:
    """Replace ``samples[start..end]`` by a line between the neighbours.

    At the series edges the available neighbour's value is held flat.
    Every sample outside the window is bit-identical to the input.
    """
    n = len(series)
    if not 0 <= start <= end < n:
        raise InvalidInputError(f"window [{start}, {end}] outside series of {n}")
    if start == 0 and end == n - 1:
        raise InvalidInputError("window covers the whole series, nothing to anchor on")
    out = series.samples.copy()
    left = out[start - 1] if start > 0 else None
    right = out[end + 1] if end < n - 1 else None
    out[start : end + 1] = _interp_values(left, right, end - start + 1)
    return SampleSeries(series.sample_rate_hz, series.t0_s, out)


def _interp_values(left: float | None, right: float | None, count: int) -> np.ndarray:
    if left is None and right is None:
        raise InvalidInputError("window has no neighbouring sample to anchor on")
    if left is None:
        return np.full(count, right)
    if right is None:
        return np.full(count, left)
    steps = np.arange(1, count + 1) / (count + 1)
    return left + (right - left) * steps


def robust_threshold(samples: np.ndarray) -> float:
    """median + 8 * MAD of ``samples``: a pulse-proof amplitude level."""
    med = float(np.median(samples))
    mad = float(np.median(np.abs(samples - med)))
    return med + 8.0 * mad


def process_block(
    series: SampleSeries, state: FilterState
) -> tuple[SampleSeries, FilterState, FilterReport]:
    """Filter one block of at least two pulse periods.

    The returned state continues the stream: feeding consecutive blocks
    reproduces what one concatenated call would do (detection context and
    the window schedule carry across the boundary).  Feed sub-period
    blocks through :func:`process_stream_block` instead.
    """
    if len(series) < 2 * state.params.period_samples:
        raise InvalidInputError(
            f"block of {len(series)} samples is shorter than two pulse periods "
            f"({2 * state.params.period_samples} samples)"
        )
    return process_stream_block(series, state)


def process_stream_block(
    series: SampleSeries, state: FilterState
) -> tuple[SampleSeries, FilterState, FilterReport]:
    """Streaming core of :func:`process_block` without the length floor."""
    if len(series) == 0:
        raise InvalidInputError("cannot filter an empty block")
    st = state.copy()
    if st.stream_pos == 0:
        st.stream_t0_s = series.t0_s
    else:
        expected = st.stream_t0_s + st.stream_pos / series.sample_rate_hz
        if abs(series.t0_s - expected) > 0.5 / series.sample_rate_hz:
            raise InvalidInputError(
                f"block starts at t={series.t0_s}s but the stream continues at "
                f"t={expected}s; use a fresh FilterState for a new stream"
            )

    p = st.params
    block = series.samples
    n = block.size
    out = block.copy()
    report = FilterReport()

    eps = p.eps if p.eps is not None else 1e-9 * max(float(np.max(np.abs(block))), 1.0)
    # Raw history for the rolling threshold estimate: slow drift moves the
    # legitimate signal range, so a stale threshold turns clean samples
    # into candidates.  Re-estimate from the trailing period of raw data
    # at every period boundary.
    hist = np.concatenate([st._recent, block]) if st._recent.size else block
    hist0 = st.stream_pos - st._recent.size
    v_auto = p.v_threshold is None

    def thresholds_at(boundary: int) -> tuple[float, float]:
        lo = max(0, boundary - p.period_samples - hist0)
        hi = boundary - hist0
        window = hist[lo:hi] if hi > lo else hist[: p.period_samples]
        # The jump gate is translation-invariant: slow drift moves the
        # signal level but not its adjacent-sample differences, so a pulse
        # edge must beat the local difference scale, not just the level.
        jump = 8.0 * float(np.median(np.abs(np.diff(window)))) if window.size > 1 else 0.0
        return robust_threshold(window), jump

    v_th, jump_th = thresholds_at(st.stream_pos)
    if not v_auto:
        v_th = p.v_threshold
    next_refresh = (st.stream_pos // p.period_samples + 1) * p.period_samples

    ctx = np.concatenate([st._tail, block]) if st._tail.size else block
    offset = st.stream_pos - st._tail.size  # absolute index of ctx[0]
    first_new = st._tail.size
    last_abs = offset + ctx.size - 1

    def window_bounds(centre: int) -> tuple[int, int]:
        ws = centre - (p.window_width_samples - 1) // 2
        return ws, ws + p.window_width_samples - 1

    def replace_window(ws: int, we: int) -> None:
        # Interpolate between the raw neighbours; clip writes to the
        # current block (earlier samples were already emitted).
        li = ws - 1 - offset
        ri = we + 1 - offset
        left = ctx[li] if li >= 0 else None
        right = ctx[ri] if ri < ctx.size else None
        values = _interp_values(left, right, we - ws + 1)
        lo = max(ws, st.stream_pos)
        hi = min(we, st.stream_pos + n - 1)
        if lo > hi:
            return
        out[lo - st.stream_pos : hi - st.stream_pos + 1] = values[lo - ws : hi - ws + 1]
        report.replaced_ranges.append((lo, hi))
        if report.detection_latency_s is None:
            report.detection_latency_s = lo / series.sample_rate_hz

    def in_window_peak(ws: int, we: int) -> tuple[bool, int]:
        w = ctx[ws - offset : we - offset + 1]
        peak = ws + int(np.argmax(w))
        return bool(np.max(w) >= v_th), peak

    def is_candidate(c: int) -> bool:
        # The difference ratio is evaluated one sample back: a pulse
        # starting at c makes the forward difference of c-1 anomalous
        # against its own backward difference.
        if ctx[c] < v_th:
            return False
        if abs(ctx[c] - ctx[c - 1]) < jump_th:
            return False
        k = pollution_ratio(ctx[c - 2], ctx[c - 1], ctx[c], eps)
        if k <= p.ratio_threshold:
            return False
        tail = ctx[c : min(c + p.window_width_samples, ctx.size)]
        if tail.size < p.min_pulse_samples:
            return False  # not enough lookahead at the block edge
        return is_pulse_width(tail, v_th, p.min_pulse_samples)

    c = first_new
    while c < ctx.size:
        if offset + c >= next_refresh:
            boundary = ((offset + c) // p.period_samples) * p.period_samples
            new_v, jump_th = thresholds_at(boundary)
            if v_auto:
                v_th = new_v
            next_refresh = boundary + p.period_samples
        if st.mode in (FilterMode.CONFIRM, FilterMode.TRACK):
            centre = st.anchor_index + p.period_samples
            ws, we = window_bounds(centre)
            if offset + c < ws:
                c = min(ws - offset, ctx.size)
                continue
            if we > last_abs:
                break  # window not fully visible yet: resume next block
            det, peak = in_window_peak(ws, we)
            if st.mode is FilterMode.CONFIRM:
                if det:
                    st.anchor_index = peak
                    st.confirmations += 1
                    replace_window(ws, we)
                    if st.confirmations >= p.confirm_count:
                        st.mode = FilterMode.TRACK
                        st.misses = 0
                else:
                    st.mode = FilterMode.ACQUIRE
                    st.confirmations = 0
            else:  # TRACK
                replace_window(ws, we)
                if det:
                    st.anchor_index = peak
                    st.misses = 0
                else:
                    st.misses += 1
                    st.anchor_index = centre
                    if st.misses >= p.miss_limit:
                        st.mode = FilterMode.ACQUIRE
                        st.misses = 0
                        st.confirmations = 0
                        report.reacquisitions += 1
            c = we + 1 - offset
            continue
        # ACQUIRE: raw scan for the first credible pulse point.
        if c >= 2 and is_candidate(c):
            run = ctx[c : min(c + p.window_width_samples, ctx.size)]
            st.anchor_index = offset + c + int(np.argmax(run))
            ws, we = window_bounds(st.anchor_index)
            replace_window(ws, min(we, last_abs))
            st.mode = FilterMode.CONFIRM
            st.confirmations = 0
            st.misses = 0
            c = we + 1 - offset
            continue
        c += 1

    keep = min(ctx.size, max(2, p.window_width_samples + 1))
    st._tail = ctx[ctx.size - keep :].copy()
    recent = np.concatenate([st._recent, block]) if st._recent.size else block
    st._recent = recent[max(0, recent.size - p.period_samples) :].copy()
    st.stream_pos += n

    filtered = SampleSeries(series.sample_rate_hz, series.t0_s, out)
    return filtered, st, report
