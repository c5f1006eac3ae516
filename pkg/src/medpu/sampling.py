"""Surface sampling, Poisson-disk elimination, farthest point sampling and
sparse/dense patch-pair generation for upsampler training sets."""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateMesh, InsufficientPoints, InvalidArgument, PatchTooSmall
from .geometry import NormalizationTransform, PointCloud, TriangleMesh, unit_sphere_transform
from .io import write_xyz
from .spatial import SpatialIndex

ELIMINATION_ALPHA = 8
DEFAULT_OVERSAMPLE = 4.0
SUPPORTED_PATCH_RATIOS = (2, 4, 16)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(np.uint64(seed))


def sample_surface_points(mesh: TriangleMesh, count: int, seed):
    """Uniform area-weighted samples; returns ``(points, normals, face_index)``."""
    if count < 1:
        raise InvalidArgument("count must be at least 1")
    if mesh.n_faces == 0:
        raise DegenerateMesh("mesh has no faces")
    areas = mesh.face_areas()
    total = float(areas.sum())
    if not total > 0:
        raise DegenerateMesh("mesh has zero total area")
    rng = _rng(seed)
    cumulative = np.cumsum(areas)
    u = rng.random(count) * cumulative[-1]
    face = np.searchsorted(cumulative, u, side="right")
    face = np.minimum(face, mesh.n_faces - 1)
    r = rng.random((count, 2))
    s = np.sqrt(r[:, 0])
    bary = np.column_stack([1.0 - s, s * (1.0 - r[:, 1]), s * r[:, 1]])
    tri = mesh.triangles()[face]
    points = np.einsum("ni,nij->nj", bary, tri)
    normals = mesh.face_normals()[face]
    return points, normals, face


def sample_surface_uniform(mesh: TriangleMesh, count: int, seed) -> PointCloud:
    points, normals, _ = sample_surface_points(mesh, count, seed)
    return PointCloud(points, normals)


def poisson_radius(area: float, count: int) -> float:
    """Disk radius of a hexagonal packing of ``count`` samples over ``area``."""
    return math.sqrt(area / (2.0 * math.sqrt(3.0) * count))


def eliminate_samples(points: np.ndarray, target: int, area: float, alpha: int = ELIMINATION_ALPHA) -> np.ndarray:
    """Weighted sample elimination down to ``target`` points.

    Each point carries weight ``sum (1 - d / r_max) ** alpha`` over neighbours
    closer than ``r_max = 2 * poisson_radius(area, target)``; the heaviest
    point is removed (lowest index on ties) and its neighbours' weights are
    reduced, until ``target`` remain. Returns surviving indices, ascending.
    """
    n = len(points)
    if target > n:
        raise InsufficientPoints(f"cannot keep {target} of {n} points")
    if target == n:
        return np.arange(n)
    r_max = 2.0 * poisson_radius(area, target)
    pairs = cKDTree(points).query_pairs(r_max, output_type="ndarray")
    if len(pairs):
        d = np.sqrt(((points[pairs[:, 0]] - points[pairs[:, 1]]) ** 2).sum(axis=1))
        w = (1.0 - np.minimum(d, r_max) / r_max) ** alpha
        src = np.concatenate([pairs[:, 0], pairs[:, 1]])
        dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
        ww = np.concatenate([w, w])
        order = np.lexsort((dst, src))
        src, dst, ww = src[order], dst[order], ww[order]
    else:
        src = dst = np.zeros(0, dtype=np.int64)
        ww = np.zeros(0)
    start = np.searchsorted(src, np.arange(n + 1))
    weight = np.bincount(src, weights=ww, minlength=n)

    alive = np.ones(n, dtype=bool)
    wt = weight
    heap = list(zip((-weight).tolist(), range(n)))
    heapq.heapify(heap)
    bounds = start.tolist()
    remaining = n
    # one heap entry per live point; weights only fall, so an entry whose key
    # is stale is re-keyed when it surfaces and a current top is the true max
    while remaining > target:
        negw, i = heap[0]
        if -negw != wt[i]:
            heapq.heapreplace(heap, (-float(wt[i]), i))
            continue
        heapq.heappop(heap)
        alive[i] = False
        remaining -= 1
        lo, hi = bounds[i], bounds[i + 1]
        # neighbours are distinct within a row; dead ones never surface again
        wt[dst[lo:hi]] -= ww[lo:hi]
    return np.nonzero(alive)[0]


def poisson_disk_sample(mesh: TriangleMesh, target_count: int, seed, oversample: float = DEFAULT_OVERSAMPLE) -> PointCloud:
    """Exactly ``target_count`` well-spread surface samples with face normals."""
    if target_count < 1:
        raise InvalidArgument("target_count must be at least 1")
    if oversample < 1:
        raise InvalidArgument("oversample factor must be at least 1")
    n_candidates = int(math.ceil(oversample * target_count))
    points, normals, _ = sample_surface_points(mesh, n_candidates, seed)
    keep = eliminate_samples(points, target_count, float(mesh.face_areas().sum()))
    return PointCloud(points[keep], normals[keep])


def farthest_point_indices(points: np.ndarray, count: int, seed=0, start_index: Optional[int] = None) -> np.ndarray:
    """Greedy max-min selection; ties go to the lowest index."""
    n = len(points)
    if count > n:
        raise InsufficientPoints(f"cannot select {count} of {n} points")
    if count < 1:
        return np.zeros(0, dtype=np.int64)
    if start_index is None:
        start_index = int(_rng(seed).integers(n))
    x = np.ascontiguousarray(points[:, 0])
    y = np.ascontiguousarray(points[:, 1])
    z = np.ascontiguousarray(points[:, 2])
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = start_index
    best = np.full(n, np.inf)
    tmp = np.empty(n)
    acc = np.empty(n)
    current = start_index
    for step in range(1, count):
        np.subtract(x, x[current], out=acc)
        np.multiply(acc, acc, out=acc)
        np.subtract(y, y[current], out=tmp)
        np.multiply(tmp, tmp, out=tmp)
        acc += tmp
        np.subtract(z, z[current], out=tmp)
        np.multiply(tmp, tmp, out=tmp)
        acc += tmp
        np.minimum(best, acc, out=best)
        current = int(np.argmax(best))
        chosen[step] = current
    return chosen


def farthest_point_sample(cloud: PointCloud, count: int, seed=0, start_index: Optional[int] = None) -> PointCloud:
    return cloud.subset(farthest_point_indices(cloud.points, count, seed, start_index))


@dataclass(frozen=True, eq=False)
class PatchPair:
    sparse: PointCloud
    dense: PointCloud
    source_id: str
    seed_point: np.ndarray
    transform: NormalizationTransform
    index: int = 0

    @property
    def ratio(self) -> int:
        return len(self.dense) // len(self.sparse)


def extract_patch_pairs(
    mesh: TriangleMesh,
    pairs_per_mesh: int,
    sparse_n: int,
    ratio: int,
    seed,
    source_id: str = "mesh",
    patch_factor: int = 3,
    surface_samples: Optional[int] = None,
) -> list[PatchPair]:
    """Cut ``pairs_per_mesh`` local sparse/dense training pairs from one mesh.

    Patch centers are spread by FPS over a dense uniform surface sample; each
    patch is the ``sparse_n * ratio * patch_factor`` samples nearest its
    center. The dense target is a Poisson-disk subset of the patch and the
    sparse input an FPS subset of the dense target, both mapped through the
    dense cloud's unit-sphere transform.
    """
    if sparse_n < 8:
        raise InvalidArgument("sparse_n must be at least 8")
    if ratio not in SUPPORTED_PATCH_RATIOS:
        raise InvalidArgument(f"ratio must be one of {SUPPORTED_PATCH_RATIOS}")
    if pairs_per_mesh < 1:
        raise InvalidArgument("pairs_per_mesh must be at least 1")
    k = sparse_n * ratio * patch_factor
    m = surface_samples if surface_samples is not None else 8 * k
    if m < k or m < pairs_per_mesh:
        raise PatchTooSmall(f"surface sample of {m} points cannot hold a {k}-point patch")
    rng = _rng(seed)
    sample_seed, fps_seed = (int(s) for s in rng.integers(0, 2 ** 63, size=2))
    points, normals, _ = sample_surface_points(mesh, m, sample_seed)
    area_per_sample = float(mesh.face_areas().sum()) / m
    centers = farthest_point_indices(points, pairs_per_mesh, fps_seed)
    index = SpatialIndex(points)
    patch_idx, _ = index.query_knn(points[centers], k)
    pairs = []
    for n_pair, (center, patch) in enumerate(zip(centers, patch_idx)):
        patch = np.sort(patch)
        keep = eliminate_samples(points[patch], ratio * sparse_n, k * area_per_sample)
        dense_idx = patch[keep]
        dense_pts = points[dense_idx]
        dense_nrm = normals[dense_idx]
        sub = farthest_point_indices(dense_pts, sparse_n, int(rng.integers(0, 2 ** 63)))
        transform = unit_sphere_transform(dense_pts)
        pairs.append(PatchPair(
            sparse=PointCloud(transform.apply(dense_pts[sub]), dense_nrm[sub]),
            dense=PointCloud(transform.apply(dense_pts), dense_nrm),
            source_id=source_id,
            seed_point=points[center].copy(),
            transform=transform,
            index=n_pair,
        ))
    return pairs


MANIFEST_FIELDS = ("source_id", "seed", "ratio", "sparse_n")


def write_patch_dataset(out_dir, entries) -> Path:
    """Write pairs to ``out_dir/pairs`` plus ``manifest.csv``.

    ``entries`` is a sequence of ``(source_id, seed, ratio, sparse_n, pairs)``.
    """
    out = Path(out_dir)
    (out / "pairs").mkdir(parents=True, exist_ok=True)
    rows = []
    for source_id, seed, ratio, sparse_n, pairs in entries:
        for pair in pairs:
            stem = out / "pairs" / f"{source_id}_{pair.index}"
            write_xyz(PointCloud(pair.sparse.points), f"{stem}_sparse.xyz")
            write_xyz(PointCloud(pair.dense.points), f"{stem}_dense.xyz")
        rows.append((source_id, seed, ratio, sparse_n))
    manifest = out / "manifest.csv"
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        writer.writerows(sorted(rows))
    return manifest
