import json

import numpy as np
import pytest

from abrsim import Manifest, ManifestError, load_manifest, synthesize_manifest, write_manifest

PAPER_LADDER = (370.0, 750.0, 1500.0, 3000.0, 5800.0, 12000.0, 17000.0, 20000.0)


def test_paper_ladder_accepted():
    man = synthesize_manifest(600, PAPER_LADDER, 2.0, vbr_jitter=0.0, seed=0)
    assert man.num_segments == 600
    assert man.num_levels == 8
    assert man.segment_duration_s == 2.0
    assert man.duration_s == 1200.0


def test_small_explicit_manifest():
    man = Manifest(2.0, (1000, 3000), [[800, 3100], [790, 2900], [810, 3050]])
    assert man.num_segments == 3
    assert man.num_levels == 2
    assert man.sizes_row(2).tolist() == [790.0, 2900.0]


def test_non_increasing_ladder_rejected():
    with pytest.raises(ManifestError, match="strictly increasing"):
        Manifest(2.0, (1000, 1000), [[800, 900]])


def test_single_level_rejected():
    with pytest.raises(ManifestError, match="two quality levels"):
        Manifest(2.0, (1000,), [[800]])


def test_ragged_matrix_rejected():
    with pytest.raises(ManifestError, match="columns"):
        Manifest(2.0, (1000, 3000), [[800, 900, 1000]])


def test_non_positive_size_names_position():
    with pytest.raises(ManifestError, match="segment 2, level 1"):
        Manifest(2.0, (1000, 3000), [[800, 3000], [0, 3000]])


def test_decreasing_row_names_position():
    with pytest.raises(ManifestError, match="segment 1"):
        Manifest(2.0, (1000, 3000), [[3000, 800], [800, 3000]])


def test_row_access_bounds():
    man = Manifest(2.0, (1000, 3000), [[800, 3000]])
    with pytest.raises(IndexError):
        man.sizes_row(0)
    with pytest.raises(IndexError):
        man.sizes_row(2)


def test_synthesize_zero_jitter_is_exact_cbr():
    man = synthesize_manifest(5, (1000, 2000), 2.0, vbr_jitter=0.0, seed=3)
    assert np.array_equal(man.segment_sizes_kbit, np.tile([2000.0, 4000.0], (5, 1)))


def test_synthesize_respects_jitter_band():
    jitter = 0.1
    man = synthesize_manifest(600, PAPER_LADDER, 2.0, vbr_jitter=jitter, seed=11)
    assert man.segment_sizes_kbit.shape == (600, 8)
    nominal = np.asarray(PAPER_LADDER) * 2.0
    ratio = man.segment_sizes_kbit / nominal
    # monotone repair clamps upward but never leaves the band of any level
    assert np.all(ratio >= 1.0 - jitter - 1e-12)
    assert np.all(ratio <= 1.0 + jitter + 1e-12)
    assert np.all(np.diff(man.segment_sizes_kbit, axis=1) >= 0)


def test_synthesize_mean_tracks_nominal():
    jitter = 0.2
    man = synthesize_manifest(4000, (1000, 4000), 2.0, vbr_jitter=jitter, seed=5)
    nominal = np.array([2000.0, 8000.0])
    mean_ratio = man.segment_sizes_kbit.mean(axis=0) / nominal
    assert np.all(np.abs(mean_ratio - 1.0) < jitter / 2)


def test_synthesize_deterministic():
    a = synthesize_manifest(50, PAPER_LADDER, 2.0, vbr_jitter=0.3, seed=42)
    b = synthesize_manifest(50, PAPER_LADDER, 2.0, vbr_jitter=0.3, seed=42)
    assert np.array_equal(a.segment_sizes_kbit, b.segment_sizes_kbit)


def test_synthesize_invalid_jitter():
    with pytest.raises(ValueError):
        synthesize_manifest(5, (1000, 2000), 2.0, vbr_jitter=0.5)
    with pytest.raises(ValueError):
        synthesize_manifest(5, (1000, 2000), 2.0, vbr_jitter=-0.1)


def test_zero_segments_allowed():
    man = synthesize_manifest(0, (1000, 2000), 2.0)
    assert man.num_segments == 0


def test_roundtrip_file(tmp_path):
    man = synthesize_manifest(20, (1000, 2000, 4000), 2.0, vbr_jitter=0.15, seed=9)
    path = tmp_path / "m.json"
    write_manifest(man, path)
    back = load_manifest(path)
    assert back.bitrates_kbps == man.bitrates_kbps
    assert back.segment_duration_s == man.segment_duration_s
    assert np.array_equal(back.segment_sizes_kbit, man.segment_sizes_kbit)


def test_load_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_load_rejects_missing_field(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps({"bitrates_kbps": [1000, 2000]}))
    with pytest.raises(ManifestError, match="field"):
        load_manifest(path)
