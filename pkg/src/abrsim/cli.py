"""Experiment harness: asset generation, single runs, and method comparisons.

Subcommands: ``run``, ``compare``, ``gen trace``, ``gen manifest``,
``concat-traces``, ``benchmark``.  A comparison is driven by one JSON config
(flags override its fields) and emits a comparison CSV, one JSON report per
(method, trace), and a per-method convergence CSV, all byte-deterministic for
a fixed config and seed.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import channel, media, metrics, session
from .baselines import BBPolicy, RBPolicy
from .l2a import L2APolicy

SCENARIO_BMAX = {"vod": 120.0, "live": 20.0}
DEFAULT_TAU = 2
DEFAULT_K_EXPONENT = 0.9

COMPARISON_COLUMNS = (
    "method",
    "avg_bitrate_kbps",
    "normalized_avg_bitrate",
    "stability",
    "smoothness",
    "consistency",
    "continuity",
)
CONVERGENCE_COLUMNS = ("t", "regret_rate", "residual1_rate", "residual2_rate")


class CliError(Exception):
    """Fatal harness error; message is printed and mapped to exit code 1."""


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def method_name(spec: dict) -> str:
    if spec.get("name"):
        return str(spec["name"])
    kind = spec.get("abr", "?")
    if kind == "l2a":
        return f"l2a-beta{spec.get('beta', 1.0):g}"
    return str(kind)


def build_policy(spec: dict, manifest: media.Manifest, b_max_s: float, horizon_t: int):
    """Instantiate a policy from a method spec dict (the config/CLI surface)."""
    kind = spec.get("abr")
    if kind == "l2a":
        v_l = spec.get("v_l")
        if v_l is None and spec.get("vl_exponent") is not None:
            v_l = float(horizon_t) ** float(spec["vl_exponent"])
        return L2APolicy(
            manifest.bitrates_kbps,
            manifest.segment_duration_s,
            b_max_s,
            horizon_t,
            beta=float(spec.get("beta", 1.0)),
            epsilon=float(spec.get("epsilon", 0.2)),
            v_l=v_l,
            alpha=spec.get("alpha"),
            utility_rate_scale=float(spec.get("utility_rate_scale", 1.5e-5)),
            average_blocked_grads=bool(spec.get("average_blocked_grads", False)),
        )
    if kind == "rb":
        return RBPolicy(
            manifest.bitrates_kbps,
            manifest.segment_duration_s,
            kappa=float(spec.get("kappa", 0.14)),
            probe_increment_kbps=float(spec.get("w", 300.0)),
            deadzone=float(spec.get("deadzone", 0.15)),
            ewma_weight=float(spec.get("ewma", 0.2)),
        )
    if kind == "bb":
        return BBPolicy(
            manifest,
            b_max_s,
            v_b=spec.get("v_b"),
            gamma_p=spec.get("gamma_p"),
        )
    raise CliError(f"unknown abr method {kind!r} (expected l2a, rb, or bb)")


def _resolve_manifest(spec, seed: int) -> media.Manifest:
    if isinstance(spec, str):
        return media.load_manifest(spec)
    if "path" in spec:
        return media.load_manifest(spec["path"])
    if "generate" in spec:
        g = spec["generate"]
        return media.synthesize_manifest(
            int(g["num_segments"]),
            g["bitrates_kbps"],
            float(g["segment_duration_s"]),
            vbr_jitter=float(g.get("vbr_jitter", 0.0)),
            seed=int(g.get("seed", seed)),
        )
    raise CliError("manifest spec needs 'path' or 'generate'")


def _resolve_traces(spec, seed: int, floor_kbps: float) -> list[tuple[str, channel.ChannelTrace]]:
    out: list[tuple[str, channel.ChannelTrace]] = []
    if isinstance(spec, dict) and "generate" in spec:
        g = spec["generate"]
        count = int(g.get("count", 1))
        for i in range(count):
            tr = channel.generate_markovian(
                float(g["duration_s"]),
                float(g["low_kbps"]),
                float(g["high_kbps"]),
                float(g["p_transition"]),
                step_s=float(g.get("step_s", 1.0)),
                seed=seed + i,
            )
            out.append((f"markovian-{seed + i:04d}", tr))
        return out
    if isinstance(spec, list):
        for entry in spec:
            path = entry["path"] if isinstance(entry, dict) else str(entry)
            out.append((Path(path).stem, channel.load_trace(path, floor_kbps)))
        return out
    raise CliError("traces spec needs a list of paths or a 'generate' block")


def _report_dict(name: str, trace_name: str, report: metrics.SessionReport,
                 bench: metrics.BenchmarkSolution | None) -> dict:
    doc = {
        "method": name,
        "trace": trace_name,
        "avg_bitrate_kbps": float(report.avg_bitrate_kbps),
        "normalized_avg_bitrate": report.normalized_avg_bitrate,
        "stability": float(report.stability),
        "smoothness": float(report.smoothness),
        "consistency": float(report.consistency),
        "continuity": float(report.continuity),
        "flags": list(report.flags),
        "series": {
            "regret_rate": [float(v) for v in report.regret_rate] if report.regret_rate is not None else None,
            "residual1_rate": [float(v) for v in report.residual1_rate] if report.residual1_rate is not None else None,
            "residual2_rate": [float(v) for v in report.residual2_rate] if report.residual2_rate is not None else None,
        },
    }
    if bench is not None:
        doc["benchmark"] = {
            "omega_star": [float(w) for w in bench.omega_star],
            "objective_kbps": float(bench.objective),
            "max_window_violation": float(bench.max_window_violation),
            "slack_used": float(bench.slack_used),
        }
    return doc


def _write_json(doc, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def _write_csv_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _print_metrics(name: str, report: metrics.SessionReport) -> None:
    print(
        f"{name}: avg_bitrate={_fmt(report.avg_bitrate_kbps)} kbps"
        + (f" normalized={_fmt(report.normalized_avg_bitrate)}" if report.normalized_avg_bitrate is not None else "")
        + f" stability={_fmt(report.stability)} smoothness={_fmt(report.smoothness)}"
        + f" consistency={_fmt(report.consistency)} continuity={_fmt(report.continuity)}"
    )


# ---------------------------------------------------------------------------
# compare


def run_compare(config: dict, out_dir: Path) -> None:
    """Run every (method x trace) session, aggregate, and write artifacts."""
    scenario = config.get("scenario", "vod")
    if scenario not in SCENARIO_BMAX:
        raise CliError(f"unknown scenario {scenario!r}")
    b_max = float(config.get("b_max_s", SCENARIO_BMAX[scenario]))
    tau = int(config.get("tau", DEFAULT_TAU))
    seed = int(config.get("seed", 0))
    floor = float(config.get("floor_kbps", channel.DEFAULT_FLOOR_KBPS))
    k_exponent = float(config.get("benchmark_k_exponent", DEFAULT_K_EXPONENT))
    sliding = bool(config.get("sliding_windows", True))
    normalize_after_average = bool(config.get("normalize_after_average", False))
    methods = config.get("methods") or []
    if not methods:
        raise CliError("config needs at least one method")

    manifest = _resolve_manifest(config.get("manifest"), seed)
    traces = _resolve_traces(config.get("traces"), seed, floor)
    if not traces:
        raise CliError("config needs at least one trace")
    traces.sort(key=lambda item: item[0])

    horizon = manifest.num_segments
    duration = manifest.duration_s
    k = max(1, min(horizon, math.ceil(horizon**k_exponent)))
    sess_cfg = session.SessionConfig(b_max_s=b_max, tau_resume=tau)

    out_dir.mkdir(parents=True, exist_ok=True)
    sessions_dir = out_dir / "sessions"
    sessions_dir.mkdir(exist_ok=True)

    names = sorted(method_name(m) for m in methods)
    if len(set(names)) != len(names):
        raise CliError(f"duplicate method names in config: {names}")
    specs = {method_name(m): m for m in methods}
    # by_method[name] = list of (trace_name, report, benchmark), in trace order
    by_method: dict[str, list] = {n: [] for n in names}

    for name in names:
        mspec = specs[name]
        for trace_name, trace in traces:
            try:
                policy = build_policy(mspec, manifest, b_max, horizon)
                state = session.run_session(policy, sess_cfg, manifest, trace)
                realized = [rec.rate_kbps for rec in state.history]
                bench = metrics.solve_benchmark(
                    manifest, realized, k, manifest.segment_duration_s, b_max, sliding=sliding
                )
                series = metrics.regret_and_residuals(
                    state.history, manifest, bench, manifest.segment_duration_s, b_max
                )
                report = metrics.qoe_metrics(state.history, manifest, tau, duration)
                report.regret_rate = list(series.regret_rate)
                report.residual1_rate = list(series.residual1_rate)
                report.residual2_rate = list(series.residual2_rate)
                if series.one_hot_fallback:
                    report.flags.append("one-hot-omega")
            except Exception as exc:
                raise CliError(
                    f"session failed for method {name!r} on trace {trace_name!r}: {exc}"
                ) from exc
            by_method[name].append((trace_name, report, bench))

    # normalization: per trace across methods (default), or on the averages
    if not normalize_after_average:
        for t_idx in range(len(traces)):
            metrics.normalize_avg_bitrate([by_method[n][t_idx][1] for n in names])

    rows = []
    for name in names:
        reports = [entry[1] for entry in by_method[name]]
        row = {
            "method": name,
            "avg_bitrate_kbps": float(np.mean([r.avg_bitrate_kbps for r in reports])),
            "stability": float(np.mean([r.stability for r in reports])),
            "smoothness": float(np.mean([r.smoothness for r in reports])),
            "consistency": float(np.mean([r.consistency for r in reports])),
            "continuity": float(np.mean([r.continuity for r in reports])),
        }
        if not normalize_after_average:
            row["normalized_avg_bitrate"] = float(np.mean([r.normalized_avg_bitrate for r in reports]))
        rows.append(row)
    if normalize_after_average:
        best = max(row["avg_bitrate_kbps"] for row in rows)
        for row in rows:
            row["normalized_avg_bitrate"] = 1.0 if best == 0 else row["avg_bitrate_kbps"] / best

    _write_csv_rows(
        out_dir / "comparison.csv",
        COMPARISON_COLUMNS,
        [
            [row["method"]] + [_fmt(row[c]) for c in COMPARISON_COLUMNS[1:]]
            for row in rows
        ],
    )

    for name in names:
        entries = by_method[name]
        for trace_name, report, bench in entries:
            _write_json(
                _report_dict(name, trace_name, report, bench),
                sessions_dir / f"{name}__{trace_name}.json",
            )
        series_mat = {
            key: np.mean([getattr(entry[1], key) for entry in entries], axis=0)
            for key in ("regret_rate", "residual1_rate", "residual2_rate")
        }
        conv_rows = [
            [str(t + 1)] + [_fmt(series_mat[key][t]) for key in ("regret_rate", "residual1_rate", "residual2_rate")]
            for t in range(horizon)
        ]
        _write_csv_rows(out_dir / f"convergence_{name}.csv", CONVERGENCE_COLUMNS, conv_rows)

    for row in rows:
        print(
            f"{row['method']}: norm_bitrate={_fmt(row['normalized_avg_bitrate'])}"
            f" stability={_fmt(row['stability'])} smoothness={_fmt(row['smoothness'])}"
            f" consistency={_fmt(row['consistency'])} continuity={_fmt(row['continuity'])}"
        )


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_run(args) -> int:
    manifest = media.load_manifest(args.manifest)
    trace = channel.load_trace(args.trace, floor_kbps=args.floor)
    b_max = args.bmax if args.bmax is not None else SCENARIO_BMAX[args.scenario]
    cfg = session.SessionConfig(b_max_s=b_max, tau_resume=args.tau)
    horizon = manifest.num_segments
    spec = {
        "abr": args.abr,
        "beta": args.beta,
        "epsilon": args.epsilon,
        "vl_exponent": args.vl_exponent,
        "alpha": args.alpha,
        "kappa": args.rb_kappa,
        "w": args.rb_w,
        "deadzone": args.rb_deadzone,
        "ewma": args.rb_ewma,
        "v_b": args.bb_vb,
        "gamma_p": args.bb_gamma_p,
    }
    spec = {k: v for k, v in spec.items() if v is not None}
    spec["abr"] = args.abr
    policy = build_policy(spec, manifest, b_max, horizon)
    name = method_name(spec)
    state = session.run_session(policy, cfg, manifest, trace)

    k = args.k if args.k else max(1, min(horizon, math.ceil(horizon**args.k_exponent)))
    bench = metrics.solve_benchmark(
        manifest, [r.rate_kbps for r in state.history], k, manifest.segment_duration_s, b_max
    )
    series = metrics.regret_and_residuals(
        state.history, manifest, bench, manifest.segment_duration_s, b_max
    )
    report = metrics.qoe_metrics(state.history, manifest, args.tau, manifest.duration_s)
    report.regret_rate = list(series.regret_rate)
    report.residual1_rate = list(series.residual1_rate)
    report.residual2_rate = list(series.residual2_rate)
    metrics.normalize_avg_bitrate([report])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        session.export_log_csv(state.history, out / f"session_{name}.csv")
    else:
        _write_json(
            [
                {
                    "t": r.t, "x_t": r.x, "r_kbps": r.bitrate_kbps, "size_kbit": r.size_kbit,
                    "C_kbps": r.rate_kbps, "download_s": r.download_s, "delta_s": r.delta_s,
                    "buffer_s": r.buffer_after_s, "stall": int(r.stall), "stall_s": r.stall_s,
                }
                for r in state.history
            ],
            out / f"session_{name}.json",
        )
    _write_json(_report_dict(name, Path(args.trace).stem, report, bench), out / f"report_{name}.json")
    _print_metrics(name, report)
    return 0


def _cmd_compare(args) -> int:
    with open(args.config) as fh:
        config = json.load(fh)
    for arg_name, cfg_key in (("scenario", "scenario"), ("bmax", "b_max_s"),
                              ("tau", "tau"), ("seed", "seed")):
        val = getattr(args, arg_name)
        if val is not None:
            config[cfg_key] = val
    run_compare(config, Path(args.out))
    return 0


def _cmd_gen(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.kind == "trace":
        trace = channel.generate_markovian(
            args.duration, args.low, args.high, args.p_transition, step_s=args.step, seed=args.seed
        )
        channel.write_trace(trace, out)
    else:
        manifest = media.synthesize_manifest(
            args.segments, _parse_bitrates(args.bitrates), args.segment_duration,
            vbr_jitter=args.jitter, seed=args.seed,
        )
        media.write_manifest(manifest, out)
    print(out)
    return 0


def _cmd_concat(args) -> int:
    traces = [channel.load_trace(p, floor_kbps=args.floor) for p in args.traces]
    channel.write_trace(channel.concat_traces(traces), Path(args.out))
    print(args.out)
    return 0


def _cmd_benchmark(args) -> int:
    manifest = media.load_manifest(args.manifest)
    history = session.read_log_csv(args.log)
    horizon = len(history)
    if horizon == 0:
        raise CliError(f"{args.log}: empty session log")
    b_max = args.bmax if args.bmax is not None else SCENARIO_BMAX[args.scenario]
    k = args.k if args.k else max(1, min(horizon, math.ceil(horizon**args.k_exponent)))
    bench = metrics.solve_benchmark(
        manifest, [r.rate_kbps for r in history], k, manifest.segment_duration_s, b_max,
        sliding=not args.disjoint_windows,
    )
    series = metrics.regret_and_residuals(
        history, manifest, bench, manifest.segment_duration_s, b_max
    )
    if series.one_hot_fallback:
        print("note: log carries no decision distributions; using one-hot choices", file=sys.stderr)
    doc = {
        "k": k,
        "omega_star": [float(w) for w in bench.omega_star],
        "objective_kbps": float(bench.objective),
        "max_window_violation": float(bench.max_window_violation),
        "slack_used": float(bench.slack_used),
    }
    if args.out:
        _write_json(doc, Path(args.out))
    if args.series:
        rows = [
            [str(t + 1), _fmt(series.regret_rate[t]), _fmt(series.residual1_rate[t]), _fmt(series.residual2_rate[t])]
            for t in range(horizon)
        ]
        _write_csv_rows(Path(args.series), CONVERGENCE_COLUMNS, rows)
    print(
        f"k={k} objective={_fmt(bench.objective)} kbps"
        f" omega_star=[{', '.join(_fmt(w) for w in bench.omega_star)}]"
        f" slack={_fmt(bench.slack_used)} max_violation={_fmt(bench.max_window_violation)}"
    )
    return 0


def _parse_bitrates(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise CliError(f"cannot parse bitrate list {text!r}") from exc


# ---------------------------------------------------------------------------
# argument parsing


def _add_policy_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--abr", choices=("l2a", "rb", "bb"), default="l2a")
    p.add_argument("--beta", type=float, default=1.0, help="switch-rate budget in (0, 1]")
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--vl-exponent", dest="vl_exponent", type=float, default=0.9,
                   help="cautiousness = T^exponent; step size derived unless --alpha")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--rb.kappa", dest="rb_kappa", type=float, default=None)
    p.add_argument("--rb.w", dest="rb_w", type=float, default=None)
    p.add_argument("--rb.deadzone", dest="rb_deadzone", type=float, default=None)
    p.add_argument("--rb.ewma", dest="rb_ewma", type=float, default=None)
    p.add_argument("--bb.vb", dest="bb_vb", type=float, default=None)
    p.add_argument("--bb.gamma-p", dest="bb_gamma_p", type=float, default=None)


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=("vod", "live"), default="vod")
    p.add_argument("--bmax", type=float, default=None, help="override scenario buffer bound (s)")
    p.add_argument("--tau", type=int, default=DEFAULT_TAU)
    p.add_argument("--floor", type=float, default=channel.DEFAULT_FLOOR_KBPS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="abrsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one session and write its log and report")
    p_run.add_argument("--manifest", required=True)
    p_run.add_argument("--trace", required=True)
    _add_scenario_flags(p_run)
    _add_policy_flags(p_run)
    p_run.add_argument("--k", type=int, default=None, help="benchmark window (default ceil(T^0.9))")
    p_run.add_argument("--k-exponent", dest="k_exponent", type=float, default=DEFAULT_K_EXPONENT)
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")
    p_run.set_defaults(fn=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run a method x trace grid from a JSON config")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--scenario", choices=("vod", "live"), default=None)
    p_cmp.add_argument("--bmax", type=float, default=None)
    p_cmp.add_argument("--tau", type=int, default=None)
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--out", default="out")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_gen = sub.add_parser("gen", help="generate synthetic assets")
    gen_sub = p_gen.add_subparsers(dest="kind", required=True)
    g_trace = gen_sub.add_parser("trace", help="two-state markovian trace CSV")
    g_trace.add_argument("--duration", type=float, required=True)
    g_trace.add_argument("--low", type=float, default=750.0)
    g_trace.add_argument("--high", type=float, default=23000.0)
    g_trace.add_argument("--p-transition", dest="p_transition", type=float, default=0.05)
    g_trace.add_argument("--step", type=float, default=1.0)
    g_trace.add_argument("--seed", type=int, default=0)
    g_trace.add_argument("--out", required=True)
    g_trace.set_defaults(fn=_cmd_gen)
    g_man = gen_sub.add_parser("manifest", help="synthetic ladder manifest JSON")
    g_man.add_argument("--segments", type=int, required=True)
    g_man.add_argument("--bitrates", default="370,750,1500,3000,5800,12000,17000,20000")
    g_man.add_argument("--segment-duration", dest="segment_duration", type=float, default=2.0)
    g_man.add_argument("--jitter", type=float, default=0.0)
    g_man.add_argument("--seed", type=int, default=0)
    g_man.add_argument("--out", required=True)
    g_man.set_defaults(fn=_cmd_gen)

    p_cat = sub.add_parser("concat-traces", help="splice trace CSVs end to end")
    p_cat.add_argument("traces", nargs="+")
    p_cat.add_argument("--floor", type=float, default=channel.DEFAULT_FLOOR_KBPS)
    p_cat.add_argument("--out", required=True)
    p_cat.set_defaults(fn=_cmd_concat)

    p_bench = sub.add_parser("benchmark", help="hindsight benchmark for an exported session log")
    p_bench.add_argument("--manifest", required=True)
    p_bench.add_argument("--log", required=True)
    p_bench.add_argument("--scenario", choices=("vod", "live"), default="vod")
    p_bench.add_argument("--bmax", type=float, default=None)
    p_bench.add_argument("--k", type=int, default=None)
    p_bench.add_argument("--k-exponent", dest="k_exponent", type=float, default=DEFAULT_K_EXPONENT)
    p_bench.add_argument("--disjoint-windows", action="store_true")
    p_bench.add_argument("--out", default=None)
    p_bench.add_argument("--series", default=None, help="write the convergence CSV here")
    p_bench.set_defaults(fn=_cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (CliError, media.ManifestError, channel.TraceError, OSError, ValueError) as exc:
        print(f"abrsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
