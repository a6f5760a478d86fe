"""Channel rate process: trace files, a two-state synthetic generator, and
fluid-model segment downloads.

A trace is a piecewise-constant bandwidth profile; a download drains the
segment's bits through that profile, so the realized per-segment rate is
well-defined (size / duration) even when a download spans several samples.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ChannelTrace",
    "DownloadResult",
    "TraceError",
    "DEFAULT_FLOOR_KBPS",
    "TRACE_HEADER",
    "concat_traces",
    "download",
    "generate_markovian",
    "load_trace",
    "write_trace",
]

TRACE_HEADER = ("timestamp_s", "throughput_kbps")

# Outage samples are floored so size/rate stays finite.
DEFAULT_FLOOR_KBPS = 10.0


class TraceError(ValueError):
    """Malformed trace file."""


@dataclass
class ChannelTrace:
    """Piecewise-constant bandwidth profile.

    Sample ``i`` gives the rate on [timestamps[i], timestamps[i+1]); the last
    sample's rate extends indefinitely.  Immutable after construction.
    """

    timestamps_s: np.ndarray
    throughputs_kbps: np.ndarray
    _cum_kbit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps_s, dtype=float)
        tp = np.asarray(self.throughputs_kbps, dtype=float)
        if ts.ndim != 1 or ts.shape != tp.shape or ts.size == 0:
            raise TraceError("trace needs matching non-empty timestamp/throughput arrays")
        if ts[0] != 0.0:
            raise TraceError("trace timestamps must start at 0")
        if np.any(np.diff(ts) <= 0):
            raise TraceError("trace timestamps must be strictly increasing")
        if np.any(tp <= 0):
            raise TraceError("trace throughputs must be positive")
        ts = ts.copy()
        tp = tp.copy()
        ts.setflags(write=False)
        tp.setflags(write=False)
        self.timestamps_s = ts
        self.throughputs_kbps = tp
        # kbit delivered from t=0 up to each sample timestamp
        cum = np.concatenate(([0.0], np.cumsum(tp[:-1] * np.diff(ts))))
        cum.setflags(write=False)
        self._cum_kbit = cum

    @property
    def num_samples(self) -> int:
        return int(self.timestamps_s.size)

    @property
    def samples(self) -> list[tuple[float, float]]:
        """(timestamp_s, throughput_kbps) pairs."""
        return list(zip(self.timestamps_s.tolist(), self.throughputs_kbps.tolist()))

    @property
    def duration_s(self) -> float:
        return float(self.timestamps_s[-1])

    @property
    def min_throughput_kbps(self) -> float:
        return float(self.throughputs_kbps.min())

    @property
    def max_throughput_kbps(self) -> float:
        return float(self.throughputs_kbps.max())


@dataclass(frozen=True)
class DownloadResult:
    """Wall-clock duration of one segment download and its realized rate."""

    duration_s: float
    effective_rate_kbps: float


def load_trace(path: str | Path, floor_kbps: float = DEFAULT_FLOOR_KBPS) -> ChannelTrace:
    """Read a trace CSV, rebase its clock to zero, and floor the throughputs.

    Samples below ``floor_kbps`` (outages are often logged as zero) are
    replaced by the floor so every download makes progress.
    """
    if floor_kbps <= 0:
        raise ValueError("floor_kbps must be positive")
    rows: list[tuple[float, float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(TRACE_HEADER):
            raise TraceError(f"{path}: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError) as exc:
                raise TraceError(f"{path}: line {lineno}: cannot parse row {row!r}") from exc
    if len(rows) < 2:
        raise TraceError(f"{path}: need at least 2 samples, got {len(rows)}")
    ts = np.array([r[0] for r in rows])
    tp = np.array([r[1] for r in rows])
    steps = np.diff(ts)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0))
        raise TraceError(f"{path}: timestamps not increasing at sample {bad + 2}")
    return ChannelTrace(ts - ts[0], np.maximum(tp, floor_kbps))


def generate_markovian(
    duration_s: float,
    low_kbps: float,
    high_kbps: float,
    p_transition: float,
    step_s: float = 1.0,
    seed: int = 0,
) -> ChannelTrace:
    """Two-state bandwidth process flipping state with fixed probability per step.

    Starts in the high state; emits one sample per ``step_s`` so transitions
    are independent of segment download durations.  Deterministic per seed.
    """
    if not 0.0 < p_transition < 1.0:
        raise ValueError(f"p_transition must be in (0, 1), got {p_transition}")
    if not 0.0 < low_kbps < high_kbps:
        raise ValueError("need 0 < low_kbps < high_kbps")
    if step_s <= 0 or duration_s <= 0:
        raise ValueError("duration_s and step_s must be positive")
    n = max(1, math.ceil(duration_s / step_s))
    rng = np.random.default_rng(seed)
    flips = rng.random(n - 1) < p_transition
    in_low = np.concatenate(([False], np.cumsum(flips) % 2 == 1))
    values = np.where(in_low, float(low_kbps), float(high_kbps))
    return ChannelTrace(np.arange(n) * float(step_s), values)


def download(trace: ChannelTrace, start_time_s: float, size_kbit: float) -> DownloadResult:
    """Drain ``size_kbit`` through the bandwidth profile from ``start_time_s``.

    Exact under the fluid model: bits accumulate at the piecewise-constant
    rate, with the final sample's rate extending forever.
    """
    if start_time_s < 0:
        raise ValueError("start_time_s must be >= 0")
    if size_kbit <= 0:
        raise ValueError("size_kbit must be positive")
    ts = trace.timestamps_s
    tp = trace.throughputs_kbps
    cum = trace._cum_kbit
    last = ts.size - 1
    i = min(int(np.searchsorted(ts, start_time_s, side="right")) - 1, last)
    # fast path: the download completes inside the start interval (always the
    # case past the final sample); exact division avoids cancellation on tiny
    # durations late in long traces
    if i == last or size_kbit <= tp[i] * (ts[i + 1] - start_time_s):
        duration = float(size_kbit) / float(tp[i])
    else:
        start_kbit = cum[i] + tp[i] * (start_time_s - ts[i])
        target = start_kbit + size_kbit
        j = int(np.searchsorted(cum, target, side="left"))
        if j > last:
            end = ts[last] + (target - cum[last]) / tp[last]
        else:
            end = ts[j - 1] + (target - cum[j - 1]) / tp[j - 1]
        duration = float(end - start_time_s)
    return DownloadResult(duration_s=duration, effective_rate_kbps=float(size_kbit) / duration)


def concat_traces(traces) -> ChannelTrace:
    """Splice traces end to end, continuing the clock after each one.

    Each trace is extended past its last sample by that trace's final sample
    interval before the next one begins (the final sample notionally lasts
    forever, so some cut must be chosen).
    """
    traces = list(traces)
    if not traces:
        raise ValueError("need at least one trace")
    ts_parts, tp_parts = [], []
    offset = 0.0
    for tr in traces:
        ts_parts.append(tr.timestamps_s + offset)
        tp_parts.append(tr.throughputs_kbps)
        if tr.timestamps_s.size > 1:
            tail = float(tr.timestamps_s[-1] - tr.timestamps_s[-2])
        else:
            tail = 1.0
        offset += float(tr.timestamps_s[-1]) + tail
    return ChannelTrace(np.concatenate(ts_parts), np.concatenate(tp_parts))


def write_trace(trace: ChannelTrace, path: str | Path) -> None:
    """Serialize a trace to its CSV file format (full float fidelity)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for t, c in zip(trace.timestamps_s, trace.throughputs_kbps):
            writer.writerow([repr(float(t)), repr(float(c))])
