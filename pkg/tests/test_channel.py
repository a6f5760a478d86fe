import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from abrsim import (
    ChannelTrace,
    TraceError,
    concat_traces,
    download,
    generate_markovian,
    load_trace,
    write_trace,
)

from conftest import constant_trace


def _write(tmp_path, rows, header="timestamp_s,throughput_kbps"):
    path = tmp_path / "trace.csv"
    path.write_text(header + "\n" + "\n".join(rows) + ("\n" if rows else ""))
    return path


# ---------------------------------------------------------------------------
# loading


def test_load_minimal(tmp_path):
    tr = load_trace(_write(tmp_path, ["0,5000", "1,8000"]))
    assert tr.num_samples == 2
    assert tr.throughputs_kbps.tolist() == [5000.0, 8000.0]


def test_load_applies_floor(tmp_path):
    tr = load_trace(_write(tmp_path, ["0,0", "1,8000"]), floor_kbps=10.0)
    assert tr.throughputs_kbps[0] == 10.0


def test_load_rebases_clock(tmp_path):
    tr = load_trace(_write(tmp_path, ["5,5000", "6,8000"]))
    assert tr.timestamps_s.tolist() == [0.0, 1.0]


def test_load_rejects_non_monotone(tmp_path):
    with pytest.raises(TraceError, match="sample 3"):
        load_trace(_write(tmp_path, ["0,5000", "2,8000", "1,9000"]))


def test_load_rejects_short(tmp_path):
    with pytest.raises(TraceError, match="at least 2"):
        load_trace(_write(tmp_path, ["0,5000"]))


def test_load_rejects_bad_header(tmp_path):
    with pytest.raises(TraceError, match="header"):
        load_trace(_write(tmp_path, ["0,5000", "1,8000"], header="time,rate"))


def test_load_rejects_garbage_row(tmp_path):
    with pytest.raises(TraceError, match="line 3"):
        load_trace(_write(tmp_path, ["0,5000", "1,abc"]))


def test_trace_invariants():
    with pytest.raises(TraceError):
        ChannelTrace(np.array([1.0, 2.0]), np.array([5.0, 5.0]))  # must start at 0
    with pytest.raises(TraceError):
        ChannelTrace(np.array([0.0, 1.0]), np.array([5.0, -1.0]))


# ---------------------------------------------------------------------------
# markovian generator


def test_markovian_paper_parameters():
    tr = generate_markovian(1200, 750, 23000, 0.05, 1.0, seed=4)
    assert tr.num_samples == 1200
    assert set(np.unique(tr.throughputs_kbps)) <= {750.0, 23000.0}
    assert tr.throughputs_kbps[0] == 23000.0  # starts high


def test_markovian_deterministic():
    a = generate_markovian(500, 750, 23000, 0.05, seed=9)
    b = generate_markovian(500, 750, 23000, 0.05, seed=9)
    assert np.array_equal(a.throughputs_kbps, b.throughputs_kbps)
    assert np.array_equal(a.timestamps_s, b.timestamps_s)


def test_markovian_state_occupancy_symmetric():
    # the 2-state chain with equal flip probability spends half its time in
    # each state; check empirically over a long horizon
    tr = generate_markovian(40000, 750, 23000, 0.05, 1.0, seed=1)
    frac_high = float(np.mean(tr.throughputs_kbps == 23000.0))
    assert abs(frac_high - 0.5) < 0.05


def test_markovian_validation():
    with pytest.raises(ValueError):
        generate_markovian(100, 750, 23000, 0.0)
    with pytest.raises(ValueError):
        generate_markovian(100, 750, 23000, 1.0)
    with pytest.raises(ValueError):
        generate_markovian(100, 23000, 750, 0.05)
    with pytest.raises(ValueError):
        generate_markovian(100, 750, 23000, 0.05, step_s=0.0)


# ---------------------------------------------------------------------------
# fluid downloads


def test_download_constant_rate():
    res = download(constant_trace(5000.0), 0.0, 10000.0)
    assert res.duration_s == pytest.approx(2.0, abs=1e-12)
    assert res.effective_rate_kbps == pytest.approx(5000.0, abs=1e-9)


def test_download_two_piece_profile():
    # 1 s at 1000 kbps (1000 kbit) + 0.5 s at 3000 kbps (1500 kbit) = 1.5 s
    tr = ChannelTrace(np.array([0.0, 1.0]), np.array([1000.0, 3000.0]))
    res = download(tr, 0.0, 2500.0)
    assert res.duration_s == pytest.approx(1.5, abs=1e-12)
    assert res.effective_rate_kbps == pytest.approx(2500.0 / 1.5, abs=1e-9)


def test_download_beyond_last_sample():
    tr = ChannelTrace(np.array([0.0, 1.0]), np.array([1000.0, 4000.0]))
    res = download(tr, 10.0, 8000.0)
    assert res.duration_s == pytest.approx(2.0, abs=1e-12)


def test_download_mid_interval_start():
    tr = ChannelTrace(np.array([0.0, 2.0]), np.array([1000.0, 3000.0]))
    # 1 s at 1000 then 1 s at 3000
    res = download(tr, 1.0, 4000.0)
    assert res.duration_s == pytest.approx(2.0, abs=1e-12)


def test_download_validation():
    tr = constant_trace(1000.0)
    with pytest.raises(ValueError):
        download(tr, -1.0, 100.0)
    with pytest.raises(ValueError):
        download(tr, 0.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(
    start=st.floats(0.0, 50.0),
    size_a=st.floats(1.0, 50000.0),
    size_b=st.floats(1.0, 50000.0),
    seed=st.integers(0, 100),
)
def test_download_additive(start, size_a, size_b, seed):
    tr = generate_markovian(60, 750, 23000, 0.2, 1.0, seed=seed)
    first = download(tr, start, size_a)
    second = download(tr, start + first.duration_s, size_b)
    combined = download(tr, start, size_a + size_b)
    assert combined.duration_s == pytest.approx(
        first.duration_s + second.duration_s, abs=1e-9
    )


def test_effective_rate_within_trace_range():
    rng = np.random.default_rng(0)
    tr = generate_markovian(200, 750, 23000, 0.1, 1.0, seed=3)
    for _ in range(200):
        res = download(tr, float(rng.uniform(0, 300)), float(rng.uniform(10, 60000)))
        assert res.effective_rate_kbps >= tr.min_throughput_kbps * (1 - 1e-12)
        assert res.effective_rate_kbps <= tr.max_throughput_kbps * (1 + 1e-12)


# ---------------------------------------------------------------------------
# concatenation and round trips


def test_concat_traces_monotone_and_preserving():
    a = generate_markovian(100, 750, 23000, 0.05, 1.0, seed=0)
    b = generate_markovian(50, 750, 23000, 0.05, 1.0, seed=1)
    cat = concat_traces([a, b])
    assert cat.num_samples == 150
    assert np.all(np.diff(cat.timestamps_s) > 0)
    assert np.array_equal(cat.throughputs_kbps[:100], a.throughputs_kbps)
    assert np.array_equal(cat.throughputs_kbps[100:], b.throughputs_kbps)
    # second trace starts one sample step after the first one's end
    assert cat.timestamps_s[100] == pytest.approx(a.duration_s + 1.0)


def test_trace_roundtrip(tmp_path):
    tr = generate_markovian(50, 750.5, 23000.25, 0.3, 0.5, seed=2)
    path = tmp_path / "t.csv"
    write_trace(tr, path)
    back = load_trace(path, floor_kbps=1.0)
    assert np.array_equal(back.timestamps_s, tr.timestamps_s)
    assert np.array_equal(back.throughputs_kbps, tr.throughputs_kbps)
