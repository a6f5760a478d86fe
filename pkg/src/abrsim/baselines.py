"""Reference rate-adaptation policies.

RB is a throughput-based policy: an additive probe tracks the available
bandwidth from below, an EWMA smooths it, and a dead-zone quantizer with
up-switch hysteresis maps the estimate to the ladder.  BB is a buffer-based
policy: it maximizes a joint utility of log-bitrate value and buffer
occupancy per size unit, with an oscillation cap that limits up-switches to
the level sustainable at the recently observed throughput.

Both are reconstructions of well-known design principles; exact parameters
are documented defaults, not ground truth, and everything is overridable.
Both share the conservative lowest-quality cold start.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .media import Manifest
from .session import EpochFeedback

__all__ = [
    "BBPolicy",
    "BBState",
    "RBParams",
    "RBPolicy",
    "RBState",
    "bb_decide",
    "derive_bb_parameters",
    "rb_decide",
]


# ---------------------------------------------------------------------------
# RB: throughput probe + smoothing + dead-zone quantizer


@dataclass
class RBParams:
    kappa: float = 0.14  # probe gain per epoch
    probe_increment_kbps: float = 300.0  # additive probing margin w
    deadzone: float = 0.15  # up-switch only if smoothed >= (1 + deadzone) * rate
    ewma_weight: float = 0.2

    def __post_init__(self) -> None:
        if self.kappa <= 0 or self.probe_increment_kbps <= 0:
            raise ValueError("kappa and probe_increment_kbps must be positive")
        if not 0 <= self.deadzone:
            raise ValueError("deadzone must be non-negative")
        if not 0 < self.ewma_weight <= 1:
            raise ValueError("ewma_weight must be in (0, 1]")


@dataclass
class RBState:
    bw_probe_kbps: float = 0.0
    bw_smooth_kbps: float = 0.0
    last_index: int = 1
    # informational only: requests are issued back to back, the session's
    # overflow delay plays the scheduler's role
    target_interrequest_s: float = 0.0
    initialized: bool = False


def rb_decide(
    state: RBState,
    params: RBParams,
    feedback: EpochFeedback | None,
    bitrates_kbps,
) -> tuple[int, RBState]:
    """Throughput-probe decision; mutates and returns state.

    The probe rises additively by kappa*w per epoch while below the observed
    rate and is pulled down proportionally to its overshoot, so a constant
    channel is its fixed point.  The dead-zone quantizer only switches up to
    levels whose rate times (1 + deadzone) fits under the smoothed estimate
    and only switches down when the current level no longer fits at all.
    """
    if feedback is None:
        state.last_index = 1
        return 1, state

    observed = float(feedback.realized_rate_kbps)
    if not state.initialized:
        state.bw_probe_kbps = observed
        state.bw_smooth_kbps = observed
        state.initialized = True
    else:
        w = params.probe_increment_kbps
        overshoot = max(state.bw_probe_kbps - observed + w, 0.0)
        state.bw_probe_kbps = max(state.bw_probe_kbps + params.kappa * (w - overshoot), 0.0)
        state.bw_smooth_kbps += params.ewma_weight * (state.bw_probe_kbps - state.bw_smooth_kbps)

    rates = [float(r) for r in bitrates_kbps]
    smooth = state.bw_smooth_kbps
    up = 0
    for n, r in enumerate(rates, start=1):
        if (1.0 + params.deadzone) * r <= smooth:
            up = n
    cur = state.last_index
    if up > cur:
        new = up
    elif rates[cur - 1] > smooth:
        new = 1
        for n, r in enumerate(rates, start=1):
            if r <= smooth:
                new = n
    else:
        new = cur
    state.last_index = new
    return new, state


class RBPolicy:
    """Session adapter for the throughput-probe policy."""

    name = "rb"

    def __init__(
        self,
        bitrates_kbps,
        segment_duration_s: float,
        kappa: float = 0.14,
        probe_increment_kbps: float = 300.0,
        deadzone: float = 0.15,
        ewma_weight: float = 0.2,
    ):
        self.params = RBParams(
            kappa=kappa,
            probe_increment_kbps=probe_increment_kbps,
            deadzone=deadzone,
            ewma_weight=ewma_weight,
        )
        self.bitrates_kbps = tuple(float(r) for r in bitrates_kbps)
        self.state = RBState(target_interrequest_s=float(segment_duration_s))

    def decide(self, feedback: EpochFeedback | None) -> int:
        x, self.state = rb_decide(self.state, self.params, feedback, self.bitrates_kbps)
        return x


# ---------------------------------------------------------------------------
# BB: buffer-level utility maximization with an up-switch cap


@dataclass
class BBState:
    v_b: float
    gamma_p: float
    last_index: int = 1

    def __post_init__(self) -> None:
        if self.v_b <= 0 or self.gamma_p <= 0:
            raise ValueError("v_b and gamma_p must be positive")


def derive_bb_parameters(
    bitrates_kbps, segment_duration_s: float, b_max_s: float
) -> tuple[float, float]:
    """Choose the utility scale and rebuffer weight from the ladder.

    The buffer threshold (in segments) for preferring level n+1 over level n
    is v_b * (gamma_p + a_n) with a_n determined by the nominal sizes and log
    utilities.  The two parameters are set so these thresholds span from one
    segment of buffer up to a nearly full buffer: the lowest level wins near
    an empty buffer and the top level wins as the buffer approaches b_max.
    """
    rates = np.asarray(bitrates_kbps, dtype=float)
    sizes = rates * segment_duration_s
    util = np.log(sizes / sizes[0])
    a = (sizes[1:] * util[:-1] - sizes[:-1] * util[1:]) / (sizes[1:] - sizes[:-1])
    q_lo = 1.0
    q_hi = max(b_max_s / segment_duration_s - 1.0, q_lo + 1.0)
    a_first, a_last = float(a[0]), float(a[-1])
    if a_last - a_first > 1e-12:
        gamma_p = (a_last * q_lo - a_first * q_hi) / (q_hi - q_lo)
        v_b = (q_hi - q_lo) / (a_last - a_first)
        if gamma_p > 0 and v_b > 0:
            return v_b, gamma_p
    # two-level ladders collapse to a single threshold: centre it
    gamma_p = 1.0 - a_first
    v_b = 0.5 * (q_lo + q_hi)
    return v_b, gamma_p


def bb_decide(
    state: BBState,
    feedback: EpochFeedback | None,
    bitrates_kbps,
    sizes_row_kbit,
    segment_duration_s: float,
) -> tuple[int, BBState]:
    """Buffer-utility decision; mutates and returns state.

    Maximizes (v_b * (ln(S_n/S_1) + gamma_p) - buffer_segments) / S_n over the
    ladder.  When the maximizer would switch up past the level sustainable at
    the last observed throughput, it is capped at that level (but never forced
    below the current one).
    """
    if feedback is None:
        state.last_index = 1
        return 1, state

    sizes = np.asarray(sizes_row_kbit, dtype=float)
    buffer_segments = float(feedback.buffer_s) / segment_duration_s
    util = np.log(sizes / sizes[0])
    score = (state.v_b * (util + state.gamma_p) - buffer_segments) / sizes
    m = int(np.argmax(score)) + 1

    if m > state.last_index:
        observed = float(feedback.realized_rate_kbps)
        sustainable = 1
        for n, r in enumerate(bitrates_kbps, start=1):
            if float(r) <= observed:
                sustainable = n
        if m > sustainable:
            m = max(sustainable, state.last_index)

    state.last_index = m
    return m, state


class BBPolicy:
    """Session adapter for the buffer-utility policy.

    Needs the manifest because the utility uses the upcoming segment's actual
    sizes, which the client knows ahead of time.
    """

    name = "bb"

    def __init__(
        self,
        manifest: Manifest,
        b_max_s: float,
        v_b: float | None = None,
        gamma_p: float | None = None,
    ):
        default_vb, default_gp = derive_bb_parameters(
            manifest.bitrates_kbps, manifest.segment_duration_s, b_max_s
        )
        self.state = BBState(
            v_b=default_vb if v_b is None else float(v_b),
            gamma_p=default_gp if gamma_p is None else float(gamma_p),
        )
        self._manifest = manifest
        self._t = 0

    def decide(self, feedback: EpochFeedback | None) -> int:
        self._t += 1
        row = self._manifest.sizes_row(self._t)
        x, self.state = bb_decide(
            self.state,
            feedback,
            self._manifest.bitrates_kbps,
            row,
            self._manifest.segment_duration_s,
        )
        return x
