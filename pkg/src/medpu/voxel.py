"""Binary masks, scalar grids and the conversions between them and point clouds.

Voxel ``(i, j, k)`` of a grid with origin ``o`` and spacing ``s`` is the box
``[o + (i, j, k) * s, o + (i + 1, j + 1, k + 1) * s)``; its sample point is the
center ``o + (i + 0.5, j + 0.5, k + 0.5) * s``. Arrays are indexed ``[i, j, k]``;
on disk and in linear indices x varies fastest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyInput, EmptyMask, FormatError, GridTooLarge, InvalidVoxelSize, TruncatedFile
from .geometry import PointCloud, TriangleMesh

MASK_MAGIC = "VMSK1"
DEFAULT_MAX_CELLS = 512 ** 3


def _as_triple(value, kind) -> tuple:
    t = tuple(kind(v) for v in np.broadcast_to(np.asarray(value), (3,)))
    return t


@dataclass(frozen=True, eq=False)
class VoxelMask:
    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        d = np.array(self.data, dtype=bool, copy=True)
        if d.ndim != 3 or min(d.shape) < 1:
            raise ValueError("mask data must be a non-empty 3D array")
        d.setflags(write=False)
        spacing = _as_triple(self.spacing, float)
        if min(spacing) <= 0:
            raise ValueError("spacing components must be positive")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", _as_triple(self.origin, float))

    @property
    def dims(self) -> tuple:
        return tuple(int(n) for n in self.data.shape)

    @property
    def occupied_count(self) -> int:
        return int(self.data.sum())

    def centers(self, ijk: np.ndarray) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(ijk, dtype=np.float64) + 0.5) * np.asarray(self.spacing)


@dataclass(frozen=True, eq=False)
class ScalarGrid:
    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64, copy=True)
        if d.ndim != 3 or min(d.shape) < 1:
            raise ValueError("grid data must be a non-empty 3D array")
        if not np.all(np.isfinite(d)):
            raise ValueError("grid values must be finite")
        d.setflags(write=False)
        spacing = _as_triple(self.spacing, float)
        if min(spacing) <= 0:
            raise ValueError("spacing components must be positive")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", _as_triple(self.origin, float))

    @property
    def dims(self) -> tuple:
        return tuple(int(n) for n in self.data.shape)


# VMSK1 files

def save_mask(mask: VoxelMask, path) -> None:
    nx, ny, nz = mask.dims
    fields = [MASK_MAGIC, nx, ny, nz, *map(repr, mask.spacing), *map(repr, mask.origin)]
    header = " ".join(str(f) for f in fields) + "\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(mask.data.ravel(order="F").astype(np.uint8).tobytes())


def load_mask(path) -> VoxelMask:
    with open(path, "rb") as fh:
        header = fh.readline()
        payload = fh.read()
    try:
        tokens = header.decode("ascii").split()
    except UnicodeDecodeError:
        raise FormatError(f"{path}: header is not ASCII") from None
    if len(tokens) != 10 or tokens[0] != MASK_MAGIC or not header.endswith(b"\n"):
        raise FormatError(f"{path}: malformed {MASK_MAGIC} header")
    try:
        nx, ny, nz = (int(t) for t in tokens[1:4])
        spacing = tuple(float(t) for t in tokens[4:7])
        origin = tuple(float(t) for t in tokens[7:10])
    except ValueError:
        raise FormatError(f"{path}: malformed {MASK_MAGIC} header") from None
    if min(nx, ny, nz) < 1 or min(spacing) <= 0 or not all(np.isfinite(spacing + origin)):
        raise FormatError(f"{path}: invalid dims or spacing in header")
    n = nx * ny * nz
    if len(payload) < n:
        raise TruncatedFile(f"{path}: expected {n} voxel bytes, found {len(payload)}")
    if len(payload) > n:
        raise FormatError(f"{path}: {len(payload) - n} trailing bytes after voxel data")
    flat = np.frombuffer(payload, dtype=np.uint8)
    if flat.max(initial=0) > 1:
        raise FormatError(f"{path}: voxel bytes must be 0 or 1")
    return VoxelMask(flat.reshape((nx, ny, nz), order="F"), spacing, origin)


# masks <-> points

def surface_voxels(data: np.ndarray) -> np.ndarray:
    """Occupied voxels with at least one unoccupied (or out-of-bounds) 6-neighbour."""
    padded = np.pad(np.asarray(data, dtype=bool), 1, constant_values=False)
    inner = padded[1:-1, 1:-1, 1:-1]
    interior = inner.copy()
    for axis in range(3):
        for shift in (-1, 1):
            interior &= np.roll(padded, shift, axis=axis)[1:-1, 1:-1, 1:-1]
    return inner & ~interior


def mask_to_surface_points(mask: VoxelMask) -> PointCloud:
    """Physical centers of boundary voxels, in ascending linear (x-fastest) order."""
    if mask.occupied_count == 0:
        raise EmptyMask("mask has no occupied voxels")
    boundary = surface_voxels(mask.data).ravel(order="F")
    lin = np.nonzero(boundary)[0]
    nx, ny, _ = mask.dims
    ijk = np.column_stack([lin % nx, (lin // nx) % ny, lin // (nx * ny)])
    return PointCloud(mask.centers(ijk))


def points_to_occupancy(cloud: PointCloud, voxel_size: float, max_cells: int = DEFAULT_MAX_CELLS) -> VoxelMask:
    """Bin points into a cubic grid padded by two empty voxels on every side.

    The grid is anchored so the bounding-box minimum sits at the center of
    voxel (2, 2, 2); each point lands in voxel ``floor((p - origin) / voxel_size)``.
    """
    if len(cloud) == 0:
        raise EmptyInput("cannot voxelize an empty cloud")
    if not voxel_size > 0 or not np.isfinite(voxel_size):
        raise InvalidVoxelSize(f"voxel size must be positive, got {voxel_size}")
    pts = cloud.points
    origin = pts.min(axis=0) - 2.5 * voxel_size
    idx = np.floor((pts - origin) / voxel_size).astype(np.int64)
    dims = idx.max(axis=0) + 3
    if int(np.prod(dims.astype(object))) > max_cells:
        raise GridTooLarge(f"grid {tuple(dims)} exceeds {max_cells} cells")
    data = np.zeros(tuple(dims), dtype=bool)
    data[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    return VoxelMask(data, (voxel_size,) * 3, tuple(origin))


def _box_sum(counts: np.ndarray, radius: int) -> np.ndarray:
    out = counts
    for axis in range(3):
        pad = [(0, 0)] * 3
        pad[axis] = (radius + 1, radius)
        c = np.cumsum(np.pad(out, pad), axis=axis)
        n = out.shape[axis]
        hi = np.take(c, np.arange(2 * radius + 1, 2 * radius + 1 + n), axis=axis)
        lo = np.take(c, np.arange(0, n), axis=axis)
        out = hi - lo
    return out


def occupancy_to_scalar(mask: VoxelMask, smoothing_radius: int = 1) -> ScalarGrid:
    """Box-filter occupancy over a (2r+1)^3 window, zero outside the grid."""
    r = int(smoothing_radius)
    if r < 0:
        raise ValueError("smoothing radius must be non-negative")
    occ = mask.data.astype(np.int64)
    if r == 0:
        values = occ.astype(np.float64)
    else:
        values = _box_sum(occ, r) / float((2 * r + 1) ** 3)
    return ScalarGrid(values, mask.spacing, mask.origin)


def fill_enclosed(mask: VoxelMask) -> VoxelMask:
    """Mark empty voxels unreachable from the border (6-connected) as occupied."""
    return VoxelMask(ndimage.binary_fill_holes(mask.data), mask.spacing, mask.origin)


# mesh cleanup

def largest_components(mesh: TriangleMesh, keep: int) -> TriangleMesh:
    """Keep the ``keep`` components with the most faces.

    Ties go to the component containing the lower face index. Unreferenced
    vertices are dropped; surviving vertices and faces keep their order.
    """
    if keep < 1:
        raise ValueError("keep must be at least 1")
    if mesh.n_faces == 0:
        return mesh
    labels = mesh.face_components()
    sizes = np.bincount(labels)
    # labels already follow lowest face index, so a stable sort on size breaks ties
    ranked = np.argsort(-sizes, kind="stable")[:keep]
    faces = mesh.faces[np.isin(labels, ranked)]
    used = np.unique(faces)
    remap = np.full(len(mesh.vertices), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(mesh.vertices[used], remap[faces])
