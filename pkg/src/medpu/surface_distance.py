"""Exact point-to-mesh distances accelerated by an AABB hierarchy."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateMesh, EmptyInput
from .geometry import TriangleMesh
from .spatial import SpatialIndex, point_distances

LEAF_SIZE = 8
# box distances are padded by this relative amount before pruning
_PRUNE_SLACK = 1e-12


def _dot(a, b):
    return (a * b).sum(axis=-1)


def _closest_on_segment(p, a, b):
    ab = b - a
    denom = _dot(ab, ab)
    t = np.where(denom > 0, _dot(p - a, ab) / np.where(denom > 0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    return a + t[..., None] * ab


def closest_points_on_triangles(p, a, b, c):
    """Closest point on triangle ``abc`` to ``p``, elementwise over leading axes.

    Voronoi-region walk over vertices, edges and interior. Zero-area triangles
    fall back to the nearest of their three edge segments.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = _dot(ab, ap)
    d2 = _dot(ac, ap)
    bp = p - b
    d3 = _dot(ab, bp)
    d4 = _dot(ac, bp)
    cp = p - c
    d5 = _dot(ab, cp)
    d6 = _dot(ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v_in = vb * denom
        w_in = vc * denom

    regions = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (d6 >= 0) & (d5 <= d6),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    choices = [
        a,
        b,
        a + v_ab[..., None] * ab,
        c,
        a + w_ac[..., None] * ac,
        b + w_bc[..., None] * (c - b),
    ]
    conds = [r[..., None] for r in regions]
    out = np.select(conds, choices, default=a + ab * v_in[..., None] + ac * w_in[..., None])

    degenerate = _dot(np.cross(ab, ac), np.cross(ab, ac)) == 0
    if np.any(degenerate):
        pd, ad, bd, cd = p[degenerate], a[degenerate], b[degenerate], c[degenerate]
        cands = np.stack([
            _closest_on_segment(pd, ad, bd),
            _closest_on_segment(pd, bd, cd),
            _closest_on_segment(pd, cd, ad),
        ])
        dist = point_distances(cands, pd[None])
        pick = np.argmin(dist, axis=0)
        out[degenerate] = cands[pick, np.arange(len(pd))]
    return out


def point_triangle_distances(p, a, b, c):
    return point_distances(p, closest_points_on_triangles(p, a, b, c))


class TriangleBVH:
    """Median-split bounding volume hierarchy over mesh faces."""

    def __init__(self, mesh: TriangleMesh, leaf_size: int = LEAF_SIZE):
        if mesh.n_faces == 0:
            raise DegenerateMesh("mesh has no faces")
        if not np.any(mesh.face_areas() > 0):
            raise DegenerateMesh("all faces have zero area")
        self.mesh = mesh
        tri = mesh.triangles()
        self._a, self._b, self._c = tri[:, 0], tri[:, 1], tri[:, 2]
        lo_f = tri.min(axis=1)
        hi_f = tri.max(axis=1)
        centroid = tri.mean(axis=1)

        order = np.arange(mesh.n_faces)
        lo, hi, left, right, start, count = [], [], [], [], [], []
        stack = [(0, mesh.n_faces, -1, 0)]
        while stack:
            s, e, parent, side = stack.pop()
            node = len(lo)
            idx = order[s:e]
            lo.append(lo_f[idx].min(axis=0))
            hi.append(hi_f[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(s)
            count.append(e - s)
            if parent >= 0:
                (left if side == 0 else right)[parent] = node
            if e - s > leaf_size:
                c = centroid[idx]
                axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
                sub = np.argsort(c[:, axis], kind="stable")
                order[s:e] = idx[sub]
                mid = s + (e - s) // 2
                stack.append((mid, e, node, 1))
                stack.append((s, mid, node, 0))
        self.order = order
        self.lo = np.array(lo)
        self.hi = np.array(hi)
        self.left = np.array(left)
        self.right = np.array(right)
        self.start = np.array(start)
        self.count = np.array(count)
        used = np.unique(mesh.faces)
        self._vertex_index = SpatialIndex(mesh.vertices[used])

    def distances(self, points) -> np.ndarray:
        """Exact minimum point-to-surface distance for each query point."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        m = len(points)
        result = np.full(m, np.inf)
        # a mesh vertex is a surface point, so its distance bounds the answer
        _, bound = self._vertex_index.query_nearest(points)
        q = np.arange(m)
        node = np.zeros(m, dtype=np.int64)
        while len(q):
            p = points[q]
            gap = np.maximum(np.maximum(self.lo[node] - p, p - self.hi[node]), 0.0)
            box = np.sqrt((gap * gap).sum(axis=1))
            limit = np.minimum(bound[q], result[q]) * (1 + _PRUNE_SLACK) + 1e-300
            keep = box <= limit
            q, node = q[keep], node[keep]
            leaf = self.left[node] < 0
            if np.any(leaf):
                lq, ln = q[leaf], node[leaf]
                reps = self.count[ln]
                qq = np.repeat(lq, reps)
                offs = np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps)
                ff = self.order[np.repeat(self.start[ln], reps) + offs]
                d = point_triangle_distances(points[qq], self._a[ff], self._b[ff], self._c[ff])
                np.minimum.at(result, qq, d)
            inner = ~leaf
            q = np.concatenate([q[inner], q[inner]])
            node = np.concatenate([self.left[node[inner]], self.right[node[inner]]])
        return result

    def distances_bruteforce(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        out = np.empty(len(points))
        for i, p in enumerate(points):
            out[i] = point_triangle_distances(np.broadcast_to(p, self._a.shape), self._a, self._b, self._c).min()
        return out


def point_to_mesh_distances(points, mesh: TriangleMesh) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyInput("no query points")
    return TriangleBVH(mesh).distances(points)
