"""Analytic test shapes: triangle meshes and rasterized masks."""

from __future__ import annotations

import numpy as np

from .geometry import TriangleMesh
from .marching_cubes import marching_cubes
from .voxel import ScalarGrid, VoxelMask


def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(np.array(v) * radius + np.asarray(center, dtype=np.float64), faces)


def torus(major: float = 1.0, minor: float = 0.35, n_major: int = 96, n_minor: int = 48,
          center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Torus around the z axis, outward-wound."""
    u = np.arange(n_major) * 2 * np.pi / n_major
    w = np.arange(n_minor) * 2 * np.pi / n_minor
    U, W = np.meshgrid(u, w, indexing="ij")
    ring = major + minor * np.cos(W)
    verts = np.stack([ring * np.cos(U), ring * np.sin(U), minor * np.sin(W)], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    a = i * n_minor + j
    b = ((i + 1) % n_major) * n_minor + j
    c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
    d = i * n_minor + (j + 1) % n_minor
    faces = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return TriangleMesh(verts + np.asarray(center, dtype=np.float64), faces)


def box(size=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Closed axis-aligned box surface, 12 outward-wound triangles."""
    h = np.asarray(size, dtype=np.float64) / 2.0
    corners = np.array([[x, y, z] for z in (-1, 1) for y in (-1, 1) for x in (-1, 1)], dtype=np.float64)
    faces = [(0, 2, 3), (0, 3, 1), (4, 5, 7), (4, 7, 6),
             (0, 1, 5), (0, 5, 4), (2, 6, 7), (2, 7, 3),
             (0, 4, 6), (0, 6, 2), (1, 3, 7), (1, 7, 5)]
    return TriangleMesh(corners * h + np.asarray(center, dtype=np.float64), faces)


def plane(size: float = 1.0, n: int = 1) -> TriangleMesh:
    """Square ``[0, size]^2`` at z = 0, split into ``2 n^2`` triangles."""
    g = np.linspace(0.0, size, n + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel(), np.zeros(X.size)])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a = i * (n + 1) + j
    b = (i + 1) * (n + 1) + j
    c = b + 1
    d = a + 1
    faces = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return TriangleMesh(verts, faces)


def rounded_box(size: float = 1.0, rounding: float = 0.2, resolution: int = 64) -> TriangleMesh:
    """Box with rounded edges, meshed from its signed distance field."""
    h = size / 2.0 - rounding
    extent = size / 2.0 + 2.0 * size / resolution
    spacing = 2 * extent / resolution
    c = -extent + (np.arange(resolution) + 0.5) * spacing
    X, Y, Z = np.meshgrid(c, c, c, indexing="ij")
    q = np.stack([np.abs(X) - h, np.abs(Y) - h, np.abs(Z) - h], axis=-1)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    sdf = outside + inside - rounding
    return marching_cubes(ScalarGrid(-sdf, (spacing,) * 3, (-extent,) * 3), 0.0)


# rasterized masks

def _centers(dims, spacing, origin):
    axes = [origin[a] + (np.arange(dims[a]) + 0.5) * spacing[a] for a in range(3)]
    return np.meshgrid(*axes, indexing="ij")


def sphere_mask(dims, radius: float, center=None, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> VoxelMask:
    """Voxels whose centers lie inside the sphere."""
    dims = tuple(int(d) for d in np.broadcast_to(dims, (3,)))
    spacing = tuple(float(s) for s in np.broadcast_to(spacing, (3,)))
    if center is None:
        center = [origin[a] + dims[a] * spacing[a] / 2.0 for a in range(3)]
    X, Y, Z = _centers(dims, spacing, origin)
    inside = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (Z - center[2]) ** 2 <= radius ** 2
    return VoxelMask(inside, spacing, origin)


def torus_mask(dims, major: float, minor: float, center=None, spacing=(1.0, 1.0, 1.0),
               origin=(0.0, 0.0, 0.0)) -> VoxelMask:
    dims = tuple(int(d) for d in np.broadcast_to(dims, (3,)))
    spacing = tuple(float(s) for s in np.broadcast_to(spacing, (3,)))
    if center is None:
        center = [origin[a] + dims[a] * spacing[a] / 2.0 for a in range(3)]
    X, Y, Z = _centers(dims, spacing, origin)
    ring = np.sqrt((X - center[0]) ** 2 + (Y - center[1]) ** 2) - major
    inside = ring ** 2 + (Z - center[2]) ** 2 <= minor ** 2
    return VoxelMask(inside, spacing, origin)


def union_mask(*masks: VoxelMask) -> VoxelMask:
    data = np.zeros(masks[0].dims, dtype=bool)
    for m in masks:
        data |= m.data
    return VoxelMask(data, masks[0].spacing, masks[0].origin)


def merge_meshes(*meshes: TriangleMesh) -> TriangleMesh:
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces))
