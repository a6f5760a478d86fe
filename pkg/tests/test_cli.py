import json

import numpy as np
import pytest

from abrsim import load_manifest, load_trace
from abrsim.cli import main


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def assets(tmp_path):
    trace = tmp_path / "trace.csv"
    manifest = tmp_path / "manifest.json"
    assert run_cli("gen", "trace", "--duration", 900, "--seed", 7, "--out", trace) == 0
    assert (
        run_cli(
            "gen", "manifest", "--segments", 60, "--jitter", "0.1",
            "--seed", 100, "--out", manifest,
        )
        == 0
    )
    return manifest, trace


def test_gen_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli("gen", "trace", "--duration", 600, "--seed", 3, "--out", a)
    run_cli("gen", "trace", "--duration", 600, "--seed", 3, "--out", b)
    assert a.read_bytes() == b.read_bytes()
    ma, mb = tmp_path / "a.json", tmp_path / "b.json"
    run_cli("gen", "manifest", "--segments", 40, "--jitter", "0.2", "--seed", 5, "--out", ma)
    run_cli("gen", "manifest", "--segments", 40, "--jitter", "0.2", "--seed", 5, "--out", mb)
    assert ma.read_bytes() == mb.read_bytes()


def test_gen_assets_parse_back(assets):
    manifest, trace = assets
    man = load_manifest(manifest)
    assert man.num_segments == 60
    tr = load_trace(trace)
    assert tr.num_samples == 900
    assert set(np.unique(tr.throughputs_kbps)) <= {750.0, 23000.0}


def test_run_single_session(assets, tmp_path, capsys):
    manifest, trace = assets
    out = tmp_path / "out"
    code = run_cli(
        "run", "--manifest", manifest, "--trace", trace, "--abr", "l2a",
        "--beta", "0.3", "--out", out,
    )
    assert code == 0
    log = out / "session_l2a-beta0.3.csv"
    report_path = out / "report_l2a-beta0.3.json"
    assert log.exists() and report_path.exists()
    report = json.loads(report_path.read_text())
    assert report["normalized_avg_bitrate"] == 1.0
    assert len(report["series"]["regret_rate"]) == 60
    assert "benchmark" in report
    printed = capsys.readouterr().out
    assert "avg_bitrate" in printed


def test_run_rb_and_bb(assets, tmp_path):
    manifest, trace = assets
    for abr in ("rb", "bb"):
        out = tmp_path / f"out-{abr}"
        assert run_cli("run", "--manifest", manifest, "--trace", trace, "--abr", abr, "--out", out) == 0
        assert (out / f"report_{abr}.json").exists()


def test_run_live_scenario_bmax(assets, tmp_path):
    manifest, trace = assets
    out = tmp_path / "live"
    assert (
        run_cli(
            "run", "--manifest", manifest, "--trace", trace, "--abr", "bb",
            "--scenario", "live", "--out", out, "--format", "json",
        )
        == 0
    )
    rows = json.loads((out / "session_bb.json").read_text())
    assert all(row["buffer_s"] <= 20.0 for row in rows)


def test_concat_traces(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli("gen", "trace", "--duration", 100, "--seed", 1, "--out", a)
    run_cli("gen", "trace", "--duration", 100, "--seed", 2, "--out", b)
    cat = tmp_path / "cat.csv"
    assert run_cli("concat-traces", a, b, "--out", cat) == 0
    tr = load_trace(cat)
    assert tr.num_samples == 200
    assert np.all(np.diff(tr.timestamps_s) > 0)


def test_benchmark_subcommand(assets, tmp_path, capsys):
    manifest, trace = assets
    out = tmp_path / "out"
    run_cli("run", "--manifest", manifest, "--trace", trace, "--abr", "rb", "--out", out)
    bench_json = tmp_path / "bench.json"
    series_csv = tmp_path / "series.csv"
    code = run_cli(
        "benchmark", "--manifest", manifest, "--log", out / "session_rb.csv",
        "--out", bench_json, "--series", series_csv,
    )
    assert code == 0
    doc = json.loads(bench_json.read_text())
    assert len(doc["omega_star"]) == 8
    assert abs(sum(doc["omega_star"]) - 1.0) < 1e-9
    lines = series_csv.read_text().splitlines()
    assert lines[0] == "t,regret_rate,residual1_rate,residual2_rate"
    assert len(lines) == 61
    captured = capsys.readouterr()
    assert "one-hot" in captured.err


def _compare_config(tmp_path, segments=50, count=2):
    cfg = {
        "scenario": "vod",
        "tau": 2,
        "seed": 0,
        "manifest": {
            "generate": {
                "num_segments": segments,
                "bitrates_kbps": [370, 750, 1500, 3000, 5800, 12000, 17000, 20000],
                "segment_duration_s": 2.0,
                "vbr_jitter": 0.1,
                "seed": 100,
            }
        },
        "traces": {
            "generate": {
                "kind": "markovian",
                "count": count,
                "duration_s": 600,
                "low_kbps": 750,
                "high_kbps": 23000,
                "p_transition": 0.05,
            }
        },
        "methods": [
            {"abr": "l2a", "beta": 1.0},
            {"abr": "l2a", "beta": 0.3},
            {"abr": "rb"},
            {"abr": "bb"},
        ],
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def test_compare_grid(tmp_path):
    cfg = _compare_config(tmp_path)
    out = tmp_path / "cmp"
    assert run_cli("compare", "--config", cfg, "--out", out) == 0
    lines = (out / "comparison.csv").read_text().splitlines()
    assert lines[0] == "method,avg_bitrate_kbps,normalized_avg_bitrate,stability,smoothness,consistency,continuity"
    assert len(lines) == 5  # header + 4 methods
    methods = sorted(line.split(",")[0] for line in lines[1:])
    assert methods == ["bb", "l2a-beta0.3", "l2a-beta1", "rb"]
    for method in methods:
        assert (out / f"convergence_{method}.csv").exists()
        for i in range(2):
            assert (out / "sessions" / f"{method}__markovian-{i:04d}.json").exists()
    # every metric column populated
    for line in lines[1:]:
        assert len(line.split(",")) == 7


def test_compare_deterministic(tmp_path):
    cfg = _compare_config(tmp_path, segments=40)
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    assert run_cli("compare", "--config", cfg, "--out", out1) == 0
    assert run_cli("compare", "--config", cfg, "--out", out2) == 0
    files1 = sorted(p.relative_to(out1) for p in out1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(out2) for p in out2.rglob("*") if p.is_file())
    assert files1 == files2
    for rel in files1:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes(), rel


def test_compare_unknown_method_fails_with_name(tmp_path, capsys):
    cfg_path = _compare_config(tmp_path)
    cfg = json.loads(cfg_path.read_text())
    cfg["methods"] = [{"abr": "nope", "name": "mystery"}]
    cfg_path.write_text(json.dumps(cfg))
    assert run_cli("compare", "--config", cfg_path, "--out", tmp_path / "x") == 1
    err = capsys.readouterr().err
    assert "mystery" in err and "markovian-0000" in err


def test_compare_scenario_override(tmp_path):
    cfg = _compare_config(tmp_path, segments=30, count=1)
    out = tmp_path / "live"
    assert run_cli("compare", "--config", cfg, "--out", out, "--scenario", "live") == 0
    doc = json.loads((out / "sessions" / "rb__markovian-0000.json").read_text())
    assert doc["method"] == "rb"


def test_missing_file_is_error(tmp_path, capsys):
    assert run_cli("run", "--manifest", tmp_path / "no.json", "--trace", tmp_path / "no.csv") == 1
    assert "error" in capsys.readouterr().err
