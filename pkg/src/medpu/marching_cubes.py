"""Marching cubes over a :class:`~medpu.voxel.ScalarGrid`.

Each mesh vertex is keyed by the grid edge it sits on, so neighbouring cells
share vertices and the output is welded by construction. Faces are emitted in
ascending cell order (x fastest), then in table order within a cell. Vertices
are ordered by grid-edge key.
"""

from __future__ import annotations

import numpy as np

from ._mc_tables import CUBE_CORNERS, CUBE_EDGES, TRI_TABLE
from .geometry import TriangleMesh
from .voxel import ScalarGrid

_CORNERS = np.array(CUBE_CORNERS, dtype=np.int64)
# per cube edge: start corner offset and axis of travel
_EDGE_START = np.array([np.minimum(_CORNERS[a], _CORNERS[b]) for a, b in CUBE_EDGES], dtype=np.int64)
_EDGE_AXIS = np.array([int(np.argmax(np.abs(_CORNERS[b] - _CORNERS[a]))) for a, b in CUBE_EDGES], dtype=np.int64)

# with this corner numbering the table's winding already faces the below-iso side
_TRIS = [np.array(t, dtype=np.int64).reshape(-1, 3) for t in TRI_TABLE]


def _empty() -> TriangleMesh:
    return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def marching_cubes(grid: ScalarGrid, iso: float) -> TriangleMesh:
    """Extract the ``iso`` level set; normals point toward lower scalar values."""
    values = grid.data
    nx, ny, nz = values.shape
    if min(nx, ny, nz) < 2:
        raise ValueError("marching cubes needs at least 2 samples per axis")
    if iso < values.min() or iso > values.max():
        return _empty()

    below = values < iso
    cx, cy, cz = nx - 1, ny - 1, nz - 1
    case = np.zeros((cx, cy, cz), dtype=np.int64)
    for bit, (ox, oy, oz) in enumerate(CUBE_CORNERS):
        case |= below[ox:ox + cx, oy:oy + cy, oz:oz + cz].astype(np.int64) << bit
    # x-fastest cell order
    case_flat = case.ravel(order="F")
    active = np.nonzero((case_flat != 0) & (case_flat != 255))[0]
    if len(active) == 0:
        return _empty()
    ci = active % cx
    cj = (active // cx) % cy
    ck = active // (cx * cy)
    cell_case = case_flat[active]

    # global key of each of the 12 edges of every active cell
    npts = nx * ny * nz
    sx = ci[:, None] + _EDGE_START[None, :, 0]
    sy = cj[:, None] + _EDGE_START[None, :, 1]
    sz = ck[:, None] + _EDGE_START[None, :, 2]
    edge_key = _EDGE_AXIS[None, :] * npts + sx + nx * (sy + ny * sz)

    cell_rows, slot_rows, tri_rows = [], [], []
    for c in np.unique(cell_case):
        tris = _TRIS[c]
        if len(tris) == 0:
            continue
        members = np.nonzero(cell_case == c)[0]
        keys = edge_key[members][:, tris]  # (m, t, 3)
        cell_rows.append(np.repeat(members, len(tris)))
        slot_rows.append(np.tile(np.arange(len(tris)), len(members)))
        tri_rows.append(keys.reshape(-1, 3))
    cells = np.concatenate(cell_rows)
    slots = np.concatenate(slot_rows)
    tri_keys = np.concatenate(tri_rows)
    order = np.lexsort((slots, cells))
    tri_keys = tri_keys[order]

    uniq, faces = np.unique(tri_keys, return_inverse=True)
    faces = faces.reshape(-1, 3)

    axis = uniq // npts
    base = uniq % npts
    bi = base % nx
    bj = (base // nx) % ny
    bk = base // (nx * ny)
    step = np.zeros((len(uniq), 3), dtype=np.int64)
    step[np.arange(len(uniq)), axis] = 1
    v0 = values[bi, bj, bk]
    v1 = values[bi + step[:, 0], bj + step[:, 1], bk + step[:, 2]]
    denom = v1 - v0
    same = denom == 0
    t = np.where(same, 0.5, (iso - v0) / np.where(same, 1.0, denom))
    pos = np.column_stack([bi, bj, bk]).astype(np.float64) + 0.5 + t[:, None] * step
    verts = np.asarray(grid.origin) + pos * np.asarray(grid.spacing)
    return TriangleMesh(verts, faces)
