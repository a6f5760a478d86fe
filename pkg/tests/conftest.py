import numpy as np

from abrsim import ChannelTrace


def constant_trace(rate_kbps: float, duration_s: float = 100000.0) -> ChannelTrace:
    return ChannelTrace(
        np.array([0.0, duration_s]), np.array([float(rate_kbps), float(rate_kbps)])
    )


def assert_buffer_law(history, b_max_s: float) -> None:
    """Epoch-boundary buffer in [0, b_max]; delay iff the pre-delay level
    would exceed b_max, in which case the buffer lands exactly on b_max."""
    for rec in history:
        assert 0.0 <= rec.buffer_after_s <= b_max_s, rec
        pre_delay = rec.buffer_after_s + rec.delta_s
        assert (rec.delta_s > 0) == (pre_delay > b_max_s), rec
        if rec.delta_s > 0:
            assert rec.buffer_after_s == b_max_s, rec


def count_switches(history) -> int:
    xs = [rec.x for rec in history]
    return sum(1 for i in range(1, len(xs)) if xs[i] != xs[i - 1])
