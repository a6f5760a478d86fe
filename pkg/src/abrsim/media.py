"""Encoded video content: quality ladder and per-segment size matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Manifest",
    "ManifestError",
    "load_manifest",
    "synthesize_manifest",
    "write_manifest",
]


class ManifestError(ValueError):
    """Malformed manifest input or broken ladder invariant."""


@dataclass
class Manifest:
    """Bitrate ladder plus the actual size of every segment at every level.

    Sizes are stored in kbit and bitrates in kbps, so size divided by rate is
    a duration in seconds with no conversion factor.  Rows of
    ``segment_sizes_kbit`` are segments (t = 1..T in the public API), columns
    are quality levels (n = 1..N, strictly increasing target bitrate), and
    every row is non-decreasing left to right.  Instances are treated as
    immutable after construction and are safe to share between sessions.
    """

    segment_duration_s: float
    bitrates_kbps: tuple[float, ...]
    segment_sizes_kbit: np.ndarray

    def __post_init__(self) -> None:
        if self.segment_duration_s <= 0:
            raise ManifestError("segment_duration_s must be positive")
        rates = tuple(float(r) for r in self.bitrates_kbps)
        if len(rates) < 2:
            raise ManifestError("need at least two quality levels")
        for n in range(1, len(rates)):
            if rates[n] <= rates[n - 1]:
                raise ManifestError(
                    f"bitrate ladder not strictly increasing at level {n + 1} "
                    f"({rates[n]:g} kbps after {rates[n - 1]:g} kbps)"
                )
        self.bitrates_kbps = rates

        sizes = np.array(self.segment_sizes_kbit, dtype=float)
        if sizes.size == 0:
            sizes = sizes.reshape(0, len(rates))
        if sizes.ndim != 2 or sizes.shape[1] != len(rates):
            raise ManifestError(
                f"segment size matrix must have {len(rates)} columns, got shape {sizes.shape}"
            )
        bad = np.argwhere(~(sizes > 0))
        if bad.size:
            t, n = bad[0]
            raise ManifestError(
                f"segment {t + 1}, level {n + 1}: sizes must be positive"
            )
        dec = np.argwhere(np.diff(sizes, axis=1) < 0)
        if dec.size:
            t, n = dec[0]
            raise ManifestError(
                f"segment {t + 1}: size decreases from level {n + 1} to {n + 2}"
            )
        sizes.setflags(write=False)
        self.segment_sizes_kbit = sizes

    @property
    def num_segments(self) -> int:
        return int(self.segment_sizes_kbit.shape[0])

    @property
    def num_levels(self) -> int:
        return len(self.bitrates_kbps)

    @property
    def duration_s(self) -> float:
        """Total playback duration of the content."""
        return self.num_segments * self.segment_duration_s

    def sizes_row(self, t: int) -> np.ndarray:
        """Sizes of segment ``t`` (1-based) across all quality levels."""
        if not 1 <= t <= self.num_segments:
            raise IndexError(f"segment {t} outside 1..{self.num_segments}")
        return self.segment_sizes_kbit[t - 1]


def load_manifest(path: str | Path) -> Manifest:
    """Load a manifest JSON file and validate every ladder invariant."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    try:
        return Manifest(
            segment_duration_s=float(doc["segment_duration_s"]),
            bitrates_kbps=tuple(float(r) for r in doc["bitrates_kbps"]),
            segment_sizes_kbit=doc["segment_sizes_kbit"],
        )
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"manifest {path}: missing or malformed field: {exc}") from exc


def synthesize_manifest(
    num_segments: int,
    bitrates_kbps,
    segment_duration_s: float,
    vbr_jitter: float = 0.0,
    seed: int = 0,
) -> Manifest:
    """Generate a size matrix around the nominal per-segment size r_n * V.

    Every entry gets independent uniform multiplicative jitter in
    [-vbr_jitter, +vbr_jitter]; each row is then repaired to stay
    non-decreasing by clamping entries up to their left neighbour (the clamped
    value still lies within the jitter band of its own level).  Jitter 0
    yields an exact CBR matrix.  Deterministic for a fixed seed.
    """
    if not 0.0 <= vbr_jitter < 0.5:
        raise ValueError(f"vbr_jitter must be in [0, 0.5), got {vbr_jitter}")
    if num_segments < 0:
        raise ValueError("num_segments must be non-negative")
    rates = np.asarray(bitrates_kbps, dtype=float)
    rng = np.random.default_rng(seed)
    noise = rng.uniform(-vbr_jitter, vbr_jitter, size=(num_segments, rates.size))
    sizes = rates * segment_duration_s * (1.0 + noise)
    sizes = np.maximum.accumulate(sizes, axis=1)
    return Manifest(float(segment_duration_s), tuple(rates), sizes)


def write_manifest(manifest: Manifest, path: str | Path) -> None:
    """Serialize a manifest to its JSON file format."""
    doc = {
        "segment_duration_s": manifest.segment_duration_s,
        "bitrates_kbps": list(manifest.bitrates_kbps),
        "segment_sizes_kbit": manifest.segment_sizes_kbit.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")
