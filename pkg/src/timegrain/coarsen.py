"""Deterministic coarsening operators over event sequences.

Two operators shorten a length-T sequence to T' = ceil(p*T) events:

* ``grid_and_count`` lays a regular grid of T' timestamps over an
  observation window and pools the events nearest to each grid point.
  Empty cells are kept (count 0, all-zero values) so the output length is
  always exactly T'.
* ``cluster_and_count`` partitions the timestamps into T' contiguous
  clusters by exact 1-d k-means and pools each cluster.

Both pool with the masked-mean merge from :mod:`timegrain.core`, so counts
are conserved and missingness composes correctly.

The 1-d k-means here is the exact dynamic program over contiguous
partitions (within-cluster sum of squares is concave-Monge in the interval
endpoints, so each DP layer is solved by divide and conquer on the argmin).
No Lloyd iterations, no initialization nondeterminism: identical inputs
give identical clusterings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import EventSequence, merge_columns


class GridUnusableError(ValueError):
    """Grid mode cannot produce the requested output; use cluster mode."""


@dataclass(frozen=True)
class CoarseningSpec:
    """Operator choice plus retention factor p in (0, 1].

    ``interval`` applies to grid mode only; when omitted, the per-sequence
    window [t_first, t_last] is used.
    """

    mode: str
    p: float
    interval: tuple[float, float] | None = None

    def __post_init__(self):
        if self.mode not in ("grid", "cluster"):
            raise ValueError(f"mode must be 'grid' or 'cluster', got {self.mode!r}")
        if not (0.0 < self.p <= 1.0):
            raise ValueError(f"retention factor p must be in (0, 1], got {self.p}")
        if self.interval is not None and not self.interval[0] < self.interval[1]:
            raise ValueError(f"interval must satisfy t_L < t_R, got {self.interval}")


@dataclass(frozen=True)
class Clustering:
    """Contiguous partition of T time-sorted points into n_clusters groups.

    ``assignments[i]`` is the 0-based cluster index of point i;
    indices are non-decreasing along the sequence.
    """

    assignments: np.ndarray
    n_clusters: int

    def starts(self) -> np.ndarray:
        """Row index where each cluster begins."""
        return np.flatnonzero(np.r_[True, np.diff(self.assignments) != 0])


def retained_length(p: float, n: int) -> int:
    """ceil(p * n) computed so that decimal p hits exact products.

    Plain ``math.ceil(p * n)`` misfires when p*n is an integer in exact
    arithmetic but lands just above it in floats (0.6 * 5 -> 3.0000...4).
    """
    q = p * n
    r = round(q)
    if abs(q - r) <= 1e-9 * max(1.0, abs(q)):
        return int(r)
    return int(math.ceil(q))


@njit(cache=True)
def _cluster_boundaries(points: np.ndarray, k: int) -> np.ndarray:  # pragma: no cover
    """Exact k-means DP; returns the k cluster start indices.

    G[m, j] = minimal within-cluster sum of squares over contiguous
    partitions of points[j:] into m clusters.  Each layer's argmin is
    non-decreasing in j, so the layer is filled by divide and conquer in
    O(T log T).  The final partition is reconstructed front-to-back taking
    the smallest split on cost ties, which yields the lexicographically
    smallest boundary vector among optimal partitions.
    """
    n = points.shape[0]
    mu = 0.0
    for i in range(n):
        mu += points[i]
    mu /= n
    # centered prefix sums keep the interval cost well conditioned
    s1 = np.zeros(n + 1)
    s2 = np.zeros(n + 1)
    for i in range(n):
        d = points[i] - mu
        s1[i + 1] = s1[i] + d
        s2[i + 1] = s2[i] + d * d

    g = np.empty((k + 1, n + 1))
    for j in range(n):
        w = s1[n] - s1[j]
        g[1, j] = s2[n] - s2[j] - w * w / (n - j)

    # DFS stack depth is bounded by ~log2(n) since mid halves the j-range
    stack = np.empty((64, 4), dtype=np.int64)
    for m in range(2, k + 1):
        jmax = n - m
        top = 0
        stack[0, 0] = 0
        stack[0, 1] = jmax
        stack[0, 2] = 0
        stack[0, 3] = jmax
        while top >= 0:
            jlo = stack[top, 0]
            jhi = stack[top, 1]
            elo = stack[top, 2]
            ehi = stack[top, 3]
            top -= 1
            if jlo > jhi:
                continue
            mid = (jlo + jhi) // 2
            best = np.inf
            beste = mid
            lo = elo if elo > mid else mid
            for e in range(lo, ehi + 1):
                w = s1[e + 1] - s1[mid]
                v = s2[e + 1] - s2[mid] - w * w / (e + 1 - mid) + g[m - 1, e + 1]
                if v < best:
                    best = v
                    beste = e
            g[m, mid] = best
            top += 1
            stack[top, 0] = jlo
            stack[top, 1] = mid - 1
            stack[top, 2] = elo
            stack[top, 3] = beste
            top += 1
            stack[top, 0] = mid + 1
            stack[top, 1] = jhi
            stack[top, 2] = beste
            stack[top, 3] = ehi

    starts = np.empty(k, dtype=np.int64)
    j = 0
    for idx, m in enumerate(range(k, 1, -1)):
        starts[idx] = j
        best = np.inf
        beste = j
        for e in range(j, n - m + 1):
            w = s1[e + 1] - s1[j]
            v = s2[e + 1] - s2[j] - w * w / (e + 1 - j) + g[m - 1, e + 1]
            if v < best:
                best = v
                beste = e
        j = beste + 1
    starts[k - 1] = j
    return starts


def kmeans1d_exact(points, k: int) -> Clustering:
    """Optimal contiguous k-clustering of sorted 1-d points.

    Minimizes total within-cluster squared deviation from cluster means;
    cost ties resolve to the lexicographically smallest boundary vector.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if np.any(np.diff(pts) < 0):
        raise ValueError("points must be sorted ascending")
    assignments = np.empty(n, dtype=np.int64)
    if k == n:
        assignments[:] = np.arange(n)
    elif k == 1:
        assignments[:] = 0
    else:
        starts = _cluster_boundaries(pts, k)
        assignments[:] = 0
        assignments[starts[1:]] = 1
        np.cumsum(assignments, out=assignments)
    return Clustering(assignments=assignments, n_clusters=k)


def clustering_cost(points, clustering: Clustering) -> float:
    """Total within-cluster sum of squared deviations from cluster means."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1)
    total = 0.0
    for start in range(clustering.n_clusters):
        member = pts[clustering.assignments == start]
        if member.size:
            total += float(np.sum((member - member.mean()) ** 2))
    return total


def cluster_and_count(seq: EventSequence, p: float) -> EventSequence:
    """Pool the sequence into ceil(p*T) clusters chosen by exact k-means."""
    if not (0.0 < p <= 1.0):
        raise ValueError(f"retention factor p must be in (0, 1], got {p}")
    n = len(seq)
    k = retained_length(p, n)
    if k == n:
        return seq
    clustering = kmeans1d_exact(seq.t, k)
    t, x, mask, c = merge_columns(seq.t, seq.x, seq.mask, seq.c, clustering.starts())
    order = np.argsort(t, kind="stable")
    return EventSequence(t[order], x[order], mask[order], c[order], id=seq.id)


def grid_and_count(
    seq: EventSequence, p: float, interval: tuple[float, float] | None = None
) -> EventSequence:
    """Pool the sequence onto a regular grid of ceil(p*T) cells.

    Every event joins its nearest grid timestamp (ties to the lower index).
    Nonempty cells take the member mean as their timestamp; empty cells
    keep the grid timestamp with count 0 and all-zero, all-unobserved
    values, so the output always has exactly ceil(p*T) events.
    """
    if not (0.0 < p <= 1.0):
        raise ValueError(f"retention factor p must be in (0, 1], got {p}")
    n = len(seq)
    if interval is None:
        t_left, t_right = float(seq.t[0]), float(seq.t[-1])
    else:
        t_left, t_right = float(interval[0]), float(interval[1])
    k = retained_length(p, n)
    if k < 2:
        raise GridUnusableError(
            f"grid mode needs at least 2 cells, got ceil(p*T) = {k}; "
            "use cluster mode for this sequence"
        )
    if not t_left < t_right:
        raise GridUnusableError(
            f"degenerate observation window [{t_left}, {t_right}]; use cluster mode"
        )
    if seq.t[0] < t_left or seq.t[-1] > t_right:
        raise ValueError(
            f"events outside the observation window [{t_left}, {t_right}]"
        )

    grid = t_left + np.arange(k) * ((t_right - t_left) / (k - 1))
    midpoints = (grid[:-1] + grid[1:]) / 2.0
    # nearest grid index; a timestamp exactly on a midpoint goes low
    idx = np.searchsorted(midpoints, seq.t, side="left")

    occupied, starts = np.unique(idx, return_index=True)
    t_m, x_m, mask_m, c_m = merge_columns(seq.t, seq.x, seq.mask, seq.c, starts)

    t_out = grid.copy()
    x_out = np.zeros((k, seq.r))
    mask_out = np.zeros((k, seq.r), dtype=bool)
    c_out = np.zeros(k, dtype=np.int64)
    t_out[occupied] = t_m
    x_out[occupied] = x_m
    mask_out[occupied] = mask_m
    c_out[occupied] = c_m

    order = np.argsort(t_out, kind="stable")
    return EventSequence(t_out[order], x_out[order], mask_out[order], c_out[order], id=seq.id)


def coarsen(seq: EventSequence, spec: CoarseningSpec) -> EventSequence:
    """Apply the operator named by the spec."""
    if spec.mode == "cluster":
        return cluster_and_count(seq, spec.p)
    return grid_and_count(seq, spec.p, spec.interval)
