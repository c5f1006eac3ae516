"""Exact nearest-neighbour and radius queries.

A ``scipy.spatial.cKDTree`` proposes candidates; distances are then recomputed
with :func:`point_distances` and ordered by ``(distance, index)``. That makes
every answer identical to a linear scan with the same distance formula,
whatever the tree's own rounding or leaf size.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput, InsufficientPoints, InvalidRadius
from .geometry import PointCloud

# widen tree answers slightly before the exact re-check
_SLACK = 1e-9
_CHUNK = 32768
_EXTRA = 6


def worker_count() -> int:
    """Worker cap from ``MEDPU_THREADS`` (defaults to 1)."""
    raw = os.environ.get("MEDPU_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def point_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance between broadcast-compatible coordinate arrays."""
    d = a - b
    return np.sqrt((d * d).sum(axis=-1))


class SpatialIndex:
    """Immutable index over a fixed point set."""

    def __init__(self, cloud, leafsize: int = 16):
        points = cloud.points if isinstance(cloud, PointCloud) else cloud
        points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            raise EmptyInput("cannot build a spatial index over an empty cloud")
        self.points = points
        self.points.setflags(write=False)
        self._tree = cKDTree(points, leafsize=leafsize, balanced_tree=False, compact_nodes=False)

    def __len__(self) -> int:
        return len(self.points)

    # single-point API

    def nearest(self, query) -> tuple[int, float]:
        idx, dist = self.query_knn(np.asarray(query, dtype=np.float64).reshape(1, 3), 1)
        return int(idx[0, 0]), float(dist[0, 0])

    def k_nearest(self, query, k: int) -> list[tuple[int, float]]:
        idx, dist = self.query_knn(np.asarray(query, dtype=np.float64).reshape(1, 3), k)
        return [(int(i), float(d)) for i, d in zip(idx[0], dist[0])]

    def radius_query(self, query, r: float) -> list[tuple[int, float]]:
        """All points within distance ``r`` (inclusive), sorted by index."""
        if not r >= 0:
            raise InvalidRadius(f"radius must be non-negative, got {r}")
        query = np.asarray(query, dtype=np.float64).reshape(3)
        cand = np.array(
            sorted(self._tree.query_ball_point(query, r * (1 + _SLACK) + 1e-300)),
            dtype=np.int64,
        )
        if len(cand) == 0:
            return []
        d = point_distances(self.points[cand], query)
        keep = d <= r
        return [(int(i), float(x)) for i, x in zip(cand[keep], d[keep])]

    # batched API

    def query_nearest(self, queries) -> tuple[np.ndarray, np.ndarray]:
        idx, dist = self.query_knn(queries, 1)
        return idx[:, 0], dist[:, 0]

    def query_knn(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Exact k nearest neighbours for each query row, sorted by (distance, index)."""
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(self.points)
        if k < 1:
            raise ValueError("k must be at least 1")
        if k > n:
            raise InsufficientPoints(f"k={k} exceeds cloud size {n}")
        out_idx = np.empty((len(queries), k), dtype=np.int64)
        out_dist = np.empty((len(queries), k), dtype=np.float64)
        for start in range(0, len(queries), _CHUNK):
            q = queries[start:start + _CHUNK]
            i, d = self._knn_chunk(q, k)
            out_idx[start:start + len(q)] = i
            out_dist[start:start + len(q)] = d
        return out_idx, out_dist

    def _knn_chunk(self, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        n = len(self.points)
        kk = min(n, k + _EXTRA)
        tree_d, cand = self._tree.query(q, k=kk, workers=worker_count())
        cand = np.asarray(cand, dtype=np.int64).reshape(len(q), kk)
        tree_d = np.asarray(tree_d).reshape(len(q), kk)
        exact = point_distances(self.points[cand], q[:, None, :])
        order = np.lexsort((cand, exact), axis=-1)
        cand = np.take_along_axis(cand, order, axis=1)
        exact = np.take_along_axis(exact, order, axis=1)
        idx, dist = cand[:, :k].copy(), exact[:, :k].copy()
        if kk < n:
            # candidates beyond the tree's horizon could tie with the k-th
            kth = dist[:, -1]
            unsafe = np.nonzero(tree_d[:, -1] <= kth * (1 + _SLACK) + 1e-300)[0]
            for row in unsafe:
                ball = np.array(
                    self._tree.query_ball_point(q[row], kth[row] * (1 + 2 * _SLACK) + 1e-300),
                    dtype=np.int64,
                )
                bd = point_distances(self.points[ball], q[row])
                o = np.lexsort((ball, bd))[:k]
                idx[row], dist[row] = ball[o], bd[o]
        return idx, dist

    def query_within(self, queries, r: float) -> list[np.ndarray]:
        """Per-query index arrays (ascending) of points within ``r``."""
        if not r >= 0:
            raise InvalidRadius(f"radius must be non-negative, got {r}")
        queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        lists = self._tree.query_ball_point(queries, r * (1 + _SLACK) + 1e-300, workers=worker_count())
        out = []
        for q, cand in zip(queries, lists):
            cand = np.array(sorted(cand), dtype=np.int64)
            if len(cand):
                cand = cand[point_distances(self.points[cand], q) <= r]
            out.append(cand)
        return out


def build(cloud) -> SpatialIndex:
    return SpatialIndex(cloud)
