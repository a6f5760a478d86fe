"""Exact Euclidean projection onto the probability simplex."""

from __future__ import annotations

import numpy as np

__all__ = ["project_simplex"]


def project_simplex(v) -> np.ndarray:
    """Closest point (in l2) to ``v`` on the probability simplex.

    Sort-based exact algorithm: find the largest prefix of the descending
    sort whose running mean excess stays below its entries, derive the
    shift theta from it, and clip.  O(N log N), no iteration.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty 1-d vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("entries must be finite")
    u = np.sort(v)[::-1]
    excess = np.cumsum(u) - 1.0
    ranks = np.arange(1, v.size + 1)
    rho = np.nonzero(u - excess / ranks > 0)[0][-1]
    theta = excess[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)
