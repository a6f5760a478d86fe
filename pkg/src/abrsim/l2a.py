"""Online-learning rate controller on the quality simplex (L2A).

The controller maintains a distribution omega over the N quality levels and
two non-negative virtual queues that accumulate predicted buffer underflow
and overflow pressure.  Each epoch it

1. adds the queue-weighted gradients of the previous epoch's loss and
   constraint functions to a running accumulator,
2. takes a projected gradient step ``omega = proj(omega - accum / (2 alpha))``
   when the switching budget allows (at most a ``beta`` fraction of epochs),
   flushing the accumulator,
3. performs dual ascent on the queues using a first-order prediction of the
   current constraints at the new point, and
4. maps the distribution to the quality whose ladder bitrate is nearest the
   expected bitrate.

The loss is the negated expected bitrate and the constraints are the expected
download time against the segment duration (underflow side) and against an
overflow allowance of b_max / T per epoch.  All three are linear in omega, so
their gradients do not depend on omega and the first-order constraint
prediction is exact for the previous epoch's channel rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .session import EpochFeedback
from .simplex import project_simplex

__all__ = [
    "L2AParams",
    "L2APolicy",
    "L2AState",
    "gradients",
    "l2a_decide",
    "loss_and_constraints",
    "map_to_quality",
    "predict_constraint",
]


def loss_and_constraints(
    omega,
    sizes_row_kbit,
    bitrates,
    rate_kbps: float,
    segment_duration_s: float,
    b_max_s: float,
    horizon_t: int,
) -> tuple[float, float, float]:
    """Expected loss and buffer-displacement constraint values at ``omega``.

    Returns ``(f, g1, g2)``: the negated expected bitrate (in whatever units
    ``bitrates`` uses), the expected download time minus the segment duration
    (positive means underflow pressure), and the slack side with its
    b_max / T overflow allowance.
    """
    omega = np.asarray(omega, dtype=float)
    expected_dl = float(np.asarray(sizes_row_kbit, dtype=float) @ omega) / rate_kbps
    f = -float(np.asarray(bitrates, dtype=float) @ omega)
    g1 = expected_dl - segment_duration_s
    g2 = segment_duration_s - expected_dl - b_max_s / horizon_t
    return f, g1, g2


def gradients(sizes_row_kbit, rate_kbps: float, bitrates):
    """Gradients of (f, g1, g2) w.r.t. omega.

    Constant vectors, because all three functions are linear in omega.
    """
    dl = np.asarray(sizes_row_kbit, dtype=float) / rate_kbps
    return -np.asarray(bitrates, dtype=float), dl, -dl


def predict_constraint(g_prev: float, grad_prev, omega_new, omega_prev) -> float:
    """First-order prediction of a constraint value at the new point."""
    diff = np.asarray(omega_new, dtype=float) - np.asarray(omega_prev, dtype=float)
    return float(g_prev + np.asarray(grad_prev, dtype=float) @ diff)


def map_to_quality(omega, bitrates_kbps) -> int:
    """Quality index (1-based) nearest the expected bitrate; ties go low."""
    rates = np.asarray(bitrates_kbps, dtype=float)
    expected = float(rates @ np.asarray(omega, dtype=float))
    return int(np.argmin(np.abs(rates - expected))) + 1


@dataclass
class L2AParams:
    """Controller schedule.

    ``v_l`` (cautiousness) defaults to T^(1 - epsilon/2) and ``alpha``
    (step size) to v_l * sqrt(T).  ``utility_rate_scale`` converts ladder
    bitrates to the internal unit of the utility gradient; the constraint
    signals are seconds of buffer displacement, so this ratio decides how
    hard the bitrate reward pulls against queue pressure under the default
    schedule.  The default keeps the long-run underflow residual near zero
    on two-state stress channels while still out-earning throughput- and
    buffer-rule baselines.  ``average_blocked_grads`` divides the
    accumulated gradient by the number of epochs it covers instead of using
    the literal sum.
    """

    horizon_t: int
    beta: float = 1.0
    epsilon: float = 0.2
    v_l: float | None = None
    alpha: float | None = None
    utility_rate_scale: float = 1.5e-5
    average_blocked_grads: bool = False

    def __post_init__(self) -> None:
        if self.horizon_t < 1:
            raise ValueError("horizon_t must be at least 1")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.v_l is None:
            self.v_l = float(self.horizon_t) ** (1.0 - self.epsilon / 2.0)
        if self.alpha is None:
            self.alpha = self.v_l * math.sqrt(self.horizon_t)
        if self.v_l <= 0 or self.alpha <= 0:
            raise ValueError("v_l and alpha must be positive")
        if self.utility_rate_scale <= 0:
            raise ValueError("utility_rate_scale must be positive")


@dataclass
class L2AState:
    """Per-session controller state."""

    omega: np.ndarray
    q1: float = 0.0
    q2: float = 0.0
    gamma: int = 0  # switch counter
    t: int = 0  # epochs decided so far
    t_prime: int = 1  # first epoch of the current accumulation run
    grad_accum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    accum_epochs: int = 0
    last_feedback: tuple | None = None  # (rate, sizes row, previous omega)

    @classmethod
    def initial(cls, n_levels: int) -> "L2AState":
        """Conservative start: all mass on the lowest quality."""
        omega = np.zeros(n_levels)
        omega[0] = 1.0
        return cls(omega=omega, grad_accum=np.zeros(n_levels))


def l2a_decide(
    state: L2AState,
    params: L2AParams,
    feedback: EpochFeedback | None,
    bitrates_kbps,
    segment_duration_s: float,
    b_max_s: float,
) -> tuple[int, L2AState]:
    """Pick the quality index for the next epoch; mutates and returns state.

    With no feedback yet (first epoch) the distribution stays at its
    initialization and the startup quality is returned.
    """
    state.t += 1
    t = state.t
    rates = np.asarray(bitrates_kbps, dtype=float)
    if feedback is None:
        state.last_feedback = None
        return map_to_quality(state.omega, rates), state

    c_prev = float(feedback.realized_rate_kbps)
    sizes_prev = np.asarray(feedback.row_sizes_kbit, dtype=float)
    omega_prev = state.omega
    grad_f, grad_g1, grad_g2 = gradients(
        sizes_prev, c_prev, rates * params.utility_rate_scale
    )
    state.grad_accum = (
        state.grad_accum + params.v_l * grad_f + state.q1 * grad_g1 + state.q2 * grad_g2
    )
    state.accum_epochs += 1

    if state.gamma / t <= params.beta:
        step_vec = state.grad_accum / (2.0 * params.alpha)
        if params.average_blocked_grads and state.accum_epochs > 1:
            step_vec = step_vec / state.accum_epochs
        omega_new = project_simplex(omega_prev - step_vec)
        state.t_prime = t + 1
        state.gamma += 1
        state.grad_accum = np.zeros_like(state.grad_accum)
        state.accum_epochs = 0
    else:
        omega_new = omega_prev

    # dual ascent on the queues, evaluated at the post-step distribution
    _, g1_prev, g2_prev = loss_and_constraints(
        omega_prev, sizes_prev, rates, c_prev, segment_duration_s, b_max_s, params.horizon_t
    )
    g1_hat = predict_constraint(g1_prev, grad_g1, omega_new, omega_prev)
    g2_hat = predict_constraint(g2_prev, grad_g2, omega_new, omega_prev)
    state.q1 = max(state.q1 + g1_hat, 0.0)
    state.q2 = max(state.q2 + g2_hat, 0.0)

    state.omega = omega_new
    state.last_feedback = (c_prev, sizes_prev, omega_prev)
    return map_to_quality(omega_new, rates), state


class L2APolicy:
    """Session adapter that owns one controller state per stream."""

    def __init__(
        self,
        bitrates_kbps,
        segment_duration_s: float,
        b_max_s: float,
        horizon_t: int,
        beta: float = 1.0,
        epsilon: float = 0.2,
        v_l: float | None = None,
        alpha: float | None = None,
        utility_rate_scale: float = 1.5e-5,
        average_blocked_grads: bool = False,
    ):
        self.params = L2AParams(
            horizon_t=horizon_t,
            beta=beta,
            epsilon=epsilon,
            v_l=v_l,
            alpha=alpha,
            utility_rate_scale=utility_rate_scale,
            average_blocked_grads=average_blocked_grads,
        )
        self.bitrates_kbps = tuple(float(r) for r in bitrates_kbps)
        self.segment_duration_s = float(segment_duration_s)
        self.b_max_s = float(b_max_s)
        self.state = L2AState.initial(len(self.bitrates_kbps))
        self.name = f"l2a-beta{beta:g}"

    @property
    def omega(self) -> np.ndarray:
        return self.state.omega

    def decide(self, feedback: EpochFeedback | None) -> int:
        x, self.state = l2a_decide(
            self.state,
            self.params,
            feedback,
            self.bitrates_kbps,
            self.segment_duration_s,
            self.b_max_s,
        )
        return x
