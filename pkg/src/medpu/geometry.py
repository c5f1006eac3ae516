"""Core geometric types shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateExtent, EmptyInput, ZeroAreaFace

NORMAL_TOLERANCE = 1e-6


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered set of 3D points, optionally with unit normals.

    Arrays are copied to float64 on construction and marked read-only.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))
        if self.normals is not None:
            nrm = np.array(self.normals, dtype=np.float64, copy=True).reshape(-1, 3)
            if nrm.shape != pts.shape:
                raise ValueError(
                    f"normals shape {nrm.shape} does not match points {pts.shape}"
                )
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_TOLERANCE):
                raise ValueError("normals must have unit length")
            object.__setattr__(self, "normals", _frozen(nrm))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def subset(self, index) -> "PointCloud":
        index = np.asarray(index)
        normals = None if self.normals is None else self.normals[index]
        return PointCloud(self.points[index], normals)

    def with_points(self, points) -> "PointCloud":
        return PointCloud(points, self.normals)


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle mesh.

    Faces must reference existing vertices, use three distinct indices, and
    not repeat the same vertex set twice. Zero-area faces with distinct
    indices are allowed (metrics handle them explicitly).
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64, copy=True).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        if len(f):
            if f.min() < 0 or f.max() >= len(v):
                raise ValueError("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ValueError("face with repeated vertex index")
            keys = np.sort(f, axis=1)
            if len(np.unique(keys, axis=0)) != len(f):
                raise ValueError("duplicated face")
        object.__setattr__(self, "vertices", _frozen(v))
        object.__setattr__(self, "faces", _frozen(f))

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of corner coordinates."""
        return self.vertices[self.faces]

    def face_cross(self) -> np.ndarray:
        tri = self.triangles()
        return np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_cross(), axis=1)

    def face_normals(self) -> np.ndarray:
        """Unit face normals; zero rows for zero-area faces."""
        c = self.face_cross()
        n = np.linalg.norm(c, axis=1)
        out = np.zeros_like(c)
        ok = n > 0
        out[ok] = c[ok] / n[ok, None]
        return out

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and the number of faces on each.

        Edges are keyed by their sorted vertex-index pair and returned in
        lexicographic order.
        """
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def face_components(self) -> np.ndarray:
        """Component label per face, faces joined when they share an edge.

        Labels are numbered by the lowest face index in each component.
        """
        nf = len(self.faces)
        if nf == 0:
            return np.zeros(0, dtype=np.int64)
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e.sort(axis=1)
        _, edge_id = np.unique(e, axis=0, return_inverse=True)
        edge_id = edge_id.reshape(-1)
        face_id = np.tile(np.arange(nf), 3)
        ne = edge_id.max() + 1
        graph = coo_matrix(
            (np.ones(len(face_id), dtype=np.int8), (face_id, nf + edge_id)),
            shape=(nf + ne, nf + ne),
        )
        _, labels = connected_components(graph, directed=False)
        labels = labels[:nf]
        # relabel so component ids follow first appearance
        _, first = np.unique(labels, return_index=True)
        order = np.argsort(first)
        remap = np.empty(len(first), dtype=np.int64)
        remap[order] = np.arange(len(first))
        return remap[labels]

    def n_components(self) -> int:
        labels = self.face_components()
        return int(labels.max() + 1) if len(labels) else 0

    def euler_characteristic(self) -> int:
        used = np.unique(self.faces)
        return int(len(used) - len(self.edges()[0]) + len(self.faces))

    def flipped(self) -> "TriangleMesh":
        return TriangleMesh(self.vertices, self.faces[:, ::-1])


@dataclass(frozen=True, eq=False)
class AABB:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.array(self.min, dtype=np.float64).reshape(3))
        hi = _frozen(np.array(self.max, dtype=np.float64).reshape(3))
        if np.any(lo > hi):
            raise ValueError("AABB min must not exceed max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))


@dataclass(frozen=True, eq=False)
class NormalizationTransform:
    """Maps x to (x - center) / scale."""

    center: np.ndarray
    scale: float

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(np.array(self.center, dtype=np.float64).reshape(3)))
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "scale", float(self.scale))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) * self.scale + self.center

    def apply_cloud(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(self.apply(cloud.points), cloud.normals)

    def invert_cloud(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(self.invert(cloud.points), cloud.normals)

    def apply_mesh(self, mesh: TriangleMesh) -> TriangleMesh:
        return TriangleMesh(self.apply(mesh.vertices), mesh.faces)

    def as_dict(self) -> dict:
        return {"center": [float(c) for c in self.center], "scale": self.scale}


def unit_sphere_transform(points: np.ndarray) -> NormalizationTransform:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise EmptyInput("cannot normalize an empty point set")
    center = points.mean(axis=0)
    scale = float(np.sqrt(((points - center) ** 2).sum(axis=1)).max())
    if scale == 0.0:
        raise DegenerateExtent("all points coincide; extent is zero")
    return NormalizationTransform(center, scale)


def normalize_to_unit_sphere(cloud: PointCloud) -> tuple[PointCloud, NormalizationTransform]:
    """Center a cloud at its centroid and scale its farthest point to radius 1."""
    transform = unit_sphere_transform(cloud.points)
    return transform.apply_cloud(cloud), transform


def bounding_box(cloud: PointCloud) -> AABB:
    if len(cloud) == 0:
        raise EmptyInput("bounding box of an empty cloud")
    return AABB(cloud.points.min(axis=0), cloud.points.max(axis=0))


def face_normal(mesh: TriangleMesh, face_index: int) -> np.ndarray:
    a, b, c = mesh.vertices[mesh.faces[face_index]]
    n = np.cross(b - a, c - a)
    length = np.linalg.norm(n)
    if not length > 0 or not np.isfinite(length):
        raise ZeroAreaFace(f"face {face_index} has zero area")
    return n / length
