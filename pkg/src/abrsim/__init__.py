"""Trace-driven adaptive-bitrate streaming simulator and analysis toolkit.

Quality indices and epoch numbers are 1-based throughout the public API; the
underlying numpy matrices are plain 0-based arrays.
"""

from .baselines import (
    BBPolicy,
    BBState,
    RBParams,
    RBPolicy,
    RBState,
    bb_decide,
    derive_bb_parameters,
    rb_decide,
)
from .channel import (
    ChannelTrace,
    DownloadResult,
    TraceError,
    concat_traces,
    download,
    generate_markovian,
    load_trace,
    write_trace,
)
from .l2a import (
    L2AParams,
    L2APolicy,
    L2AState,
    gradients,
    l2a_decide,
    loss_and_constraints,
    map_to_quality,
    predict_constraint,
)
from .media import Manifest, ManifestError, load_manifest, synthesize_manifest, write_manifest
from .metrics import (
    BenchmarkSolution,
    ConvergenceSeries,
    SessionReport,
    normalize_avg_bitrate,
    qoe_metrics,
    regret_and_residuals,
    solve_benchmark,
)
from .session import (
    EpochFeedback,
    EpochRecord,
    ScriptedPolicy,
    SessionConfig,
    SessionState,
    export_log_csv,
    read_log_csv,
    run_session,
    step,
)
from .simplex import project_simplex

__version__ = "0.1.0"

__all__ = [
    "BBPolicy",
    "BBState",
    "BenchmarkSolution",
    "ChannelTrace",
    "ConvergenceSeries",
    "DownloadResult",
    "EpochFeedback",
    "EpochRecord",
    "L2AParams",
    "L2APolicy",
    "L2AState",
    "Manifest",
    "ManifestError",
    "RBParams",
    "RBPolicy",
    "RBState",
    "ScriptedPolicy",
    "SessionConfig",
    "SessionReport",
    "SessionState",
    "TraceError",
    "bb_decide",
    "concat_traces",
    "derive_bb_parameters",
    "download",
    "export_log_csv",
    "generate_markovian",
    "gradients",
    "l2a_decide",
    "load_manifest",
    "load_trace",
    "loss_and_constraints",
    "map_to_quality",
    "normalize_avg_bitrate",
    "predict_constraint",
    "project_simplex",
    "qoe_metrics",
    "rb_decide",
    "read_log_csv",
    "regret_and_residuals",
    "run_session",
    "solve_benchmark",
    "step",
    "synthesize_manifest",
    "write_manifest",
    "write_trace",
]
