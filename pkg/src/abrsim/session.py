"""Per-epoch client loop: request, download, buffer update, feedback.

Each epoch the player downloads one segment (wall-clock duration d), drains d
seconds of buffer while playing, gains one segment duration V on completion,
and delays the next request by Delta = [pre_append_buffer + V - B_max]^+ so
the buffer never exceeds B_max at an epoch boundary.  An underflow
(buffer < d) pauses playback until ``tau_resume`` segments have been appended
since the pause began; while paused the buffer does not drain, but new stall
indicator epochs are still recorded whenever buffer < d.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Protocol

from .channel import ChannelTrace, download
from .media import Manifest

__all__ = [
    "EpochFeedback",
    "EpochRecord",
    "LOG_COLUMNS",
    "Policy",
    "ScriptedPolicy",
    "SessionConfig",
    "SessionState",
    "export_log_csv",
    "read_log_csv",
    "run_session",
    "step",
]

LOG_COLUMNS = (
    "t",
    "x_t",
    "r_kbps",
    "size_kbit",
    "C_kbps",
    "download_s",
    "delta_s",
    "buffer_s",
    "stall",
    "stall_s",
)


@dataclass
class SessionConfig:
    """Client-side playback parameters."""

    b_max_s: float
    tau_resume: int = 2
    startup_policy: str = "start-at-lowest"

    def __post_init__(self) -> None:
        if self.b_max_s <= 0:
            raise ValueError("b_max_s must be positive")
        if self.tau_resume < 1:
            raise ValueError("tau_resume must be at least 1")
        if self.startup_policy != "start-at-lowest":
            raise ValueError(f"unsupported startup policy {self.startup_policy!r}")


@dataclass(frozen=True)
class EpochFeedback:
    """What the client learns once an epoch completes."""

    realized_rate_kbps: float
    chosen_size_kbit: float
    row_sizes_kbit: tuple[float, ...]
    buffer_s: float


@dataclass(frozen=True)
class EpochRecord:
    """One line of the per-epoch session log (t and x are 1-based)."""

    t: int
    x: int
    bitrate_kbps: float
    size_kbit: float
    rate_kbps: float
    download_s: float
    delta_s: float
    buffer_before_s: float
    buffer_after_s: float
    stall: bool  # underflow indicator: buffer_before < download time
    stall_s: float  # paused playback time accrued during this epoch
    omega: tuple[float, ...] | None = None


@dataclass
class SessionState:
    """Mutable per-session bookkeeping; one instance per stream."""

    epoch_t: int = 1
    buffer_s: float = 0.0
    wall_clock_s: float = 0.0
    stalled: bool = False
    segments_since_stall: int = 0
    history: list[EpochRecord] = field(default_factory=list)


class Policy(Protocol):
    """Anything that can pick a quality index from per-epoch feedback."""

    name: str

    def decide(self, feedback: EpochFeedback | None) -> int: ...


class ScriptedPolicy:
    """Replays a fixed quality-index sequence (tests, log replay)."""

    name = "scripted"

    def __init__(self, indices: Iterable[int]):
        self._it = iter(indices)

    def decide(self, feedback: EpochFeedback | None) -> int:
        return next(self._it)


def step(
    state: SessionState,
    config: SessionConfig,
    manifest: Manifest,
    trace: ChannelTrace,
    x_t: int,
) -> tuple[SessionState, EpochFeedback]:
    """Advance one epoch with quality choice ``x_t`` (1-based).

    Mutates ``state`` in place and returns ``(state, feedback)``.  The buffer
    stays in [0, b_max_s] at every epoch boundary by construction: the
    overflow delay is exactly the excess of the pre-append level plus V over
    b_max_s, and deficits are converted to recorded stall time instead of
    negative buffer.
    """
    n_levels = manifest.num_levels
    if not 1 <= x_t <= n_levels:
        raise ValueError(f"quality index {x_t} outside 1..{n_levels}")
    if state.epoch_t > manifest.num_segments:
        raise ValueError(f"epoch {state.epoch_t} beyond horizon {manifest.num_segments}")
    v = manifest.segment_duration_s
    if config.b_max_s < v:
        raise ValueError("b_max_s smaller than the segment duration")

    row = manifest.sizes_row(state.epoch_t)
    size = float(row[x_t - 1])
    result = download(trace, state.wall_clock_s, size)
    d = result.duration_s
    b0 = state.buffer_s
    underflow = b0 < d

    if state.stalled:
        # playback already paused: nothing drains, the whole epoch stalls
        drained = b0
        stall_time = d
    elif underflow:
        state.stalled = True
        state.segments_since_stall = 0
        drained = 0.0
        stall_time = d - b0
    else:
        drained = b0 - d
        stall_time = 0.0

    pre_append = drained + v
    b1 = min(pre_append, config.b_max_s)
    delta = pre_append - b1
    state.buffer_s = b1
    state.wall_clock_s += d + delta

    if state.stalled:
        state.segments_since_stall += 1
        if state.segments_since_stall >= config.tau_resume:
            state.stalled = False
            state.segments_since_stall = 0

    record = EpochRecord(
        t=state.epoch_t,
        x=x_t,
        bitrate_kbps=manifest.bitrates_kbps[x_t - 1],
        size_kbit=size,
        rate_kbps=result.effective_rate_kbps,
        download_s=d,
        delta_s=delta,
        buffer_before_s=b0,
        buffer_after_s=b1,
        stall=bool(underflow),
        stall_s=stall_time,
    )
    state.history.append(record)
    feedback = EpochFeedback(
        realized_rate_kbps=result.effective_rate_kbps,
        chosen_size_kbit=size,
        row_sizes_kbit=tuple(float(s) for s in row),
        buffer_s=b1,
    )
    state.epoch_t += 1
    return state, feedback


def run_session(
    policy: Policy,
    config: SessionConfig,
    manifest: Manifest,
    trace: ChannelTrace,
) -> SessionState:
    """Run the decide/download/update loop over the whole manifest horizon.

    Fully deterministic given (policy state, manifest, trace).  If the policy
    exposes an ``omega`` attribute (its current decision distribution), it is
    copied into each epoch record for later regret analysis.
    """
    state = SessionState()
    feedback: EpochFeedback | None = None
    for _ in range(manifest.num_segments):
        x = policy.decide(feedback)
        state, feedback = step(state, config, manifest, trace, x)
        omega = getattr(policy, "omega", None)
        if omega is not None:
            state.history[-1] = replace(
                state.history[-1], omega=tuple(float(w) for w in omega)
            )
    return state


def export_log_csv(history: Iterable[EpochRecord], path: str | Path) -> None:
    """Write the per-epoch log in its CSV schema (full float fidelity)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for r in history:
            writer.writerow(
                [
                    r.t,
                    r.x,
                    repr(float(r.bitrate_kbps)),
                    repr(float(r.size_kbit)),
                    repr(float(r.rate_kbps)),
                    repr(float(r.download_s)),
                    repr(float(r.delta_s)),
                    repr(float(r.buffer_after_s)),
                    int(r.stall),
                    repr(float(r.stall_s)),
                ]
            )


def read_log_csv(path: str | Path) -> list[EpochRecord]:
    """Read a log written by ``export_log_csv``.

    The exported schema carries the post-epoch buffer; the pre-epoch buffer is
    reconstructed from the previous row (B_0 = 0), which is exact because the
    schema preserves full float precision.
    """
    records: list[EpochRecord] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != LOG_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(LOG_COLUMNS)}")
        buffer_before = 0.0
        for row in reader:
            if not row:
                continue
            rec = EpochRecord(
                t=int(row[0]),
                x=int(row[1]),
                bitrate_kbps=float(row[2]),
                size_kbit=float(row[3]),
                rate_kbps=float(row[4]),
                download_s=float(row[5]),
                delta_s=float(row[6]),
                buffer_before_s=buffer_before,
                buffer_after_s=float(row[7]),
                stall=bool(int(row[8])),
                stall_s=float(row[9]),
            )
            records.append(rec)
            buffer_before = rec.buffer_after_s
    return records
