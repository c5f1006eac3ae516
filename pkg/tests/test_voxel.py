import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from medpu.errors import EmptyInput, EmptyMask, FormatError, GridTooLarge, InvalidVoxelSize, TruncatedFile
from medpu.geometry import PointCloud, TriangleMesh
from medpu.phantoms import sphere_mask
from medpu.voxel import (
    VoxelMask,
    fill_enclosed,
    largest_components,
    load_mask,
    mask_to_surface_points,
    occupancy_to_scalar,
    points_to_occupancy,
    save_mask,
    surface_voxels,
)

masks = arrays(np.bool_, st.tuples(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6)))


def test_single_voxel_file(tmp_path):
    path = tmp_path / "one.vmsk"
    path.write_bytes(b"VMSK1 1 1 1 1 1 1 0 0 0\n\x01")
    m = load_mask(path)
    assert m.dims == (1, 1, 1)
    assert m.data.ravel().tolist() == [True]


def test_roundtrip_random(tmp_path):
    rng = np.random.default_rng(0)
    m = VoxelMask(rng.random((16, 16, 16)) < 0.4, (0.5, 1.0, 2.0), (-1.0, 0.25, 3.0))
    save_mask(m, tmp_path / "m.vmsk")
    back = load_mask(tmp_path / "m.vmsk")
    np.testing.assert_array_equal(back.data, m.data)
    assert back.spacing == m.spacing and back.origin == m.origin
    assert (tmp_path / "m.vmsk").read_bytes() == (save_mask(back, tmp_path / "n.vmsk") or
                                                   (tmp_path / "n.vmsk").read_bytes())


def test_x_fastest_layout(tmp_path):
    data = np.zeros((3, 2, 1), dtype=bool)
    data[1, 0, 0] = True   # linear index 1
    data[0, 1, 0] = True   # linear index 3
    save_mask(VoxelMask(data, (1, 1, 1), (0, 0, 0)), tmp_path / "m.vmsk")
    payload = (tmp_path / "m.vmsk").read_bytes().split(b"\n", 1)[1]
    assert list(payload) == [0, 1, 0, 1, 0, 0]


@pytest.mark.parametrize("content,exc", [
    (b"VMSK2 1 1 1 1 1 1 0 0 0\n\x01", FormatError),
    (b"VMSK1 1 1 1 1 1\n\x01", FormatError),
    (b"VMSK1 1 1 a 1 1 1 0 0 0\n\x01", FormatError),
    (b"VMSK1 2 2 2 1 1 1 0 0 0\n\x01\x00", TruncatedFile),
    (b"VMSK1 1 1 1 1 1 1 0 0 0\n\x01\x00", FormatError),
    (b"VMSK1 1 1 1 1 1 1 0 0 0\n\x02", FormatError),
    (b"VMSK1 1 1 1 0 1 1 0 0 0\n\x01", FormatError),
])
def test_malformed_files(tmp_path, content, exc):
    path = tmp_path / "bad.vmsk"
    path.write_bytes(content)
    with pytest.raises(exc):
        load_mask(path)


def test_sphere_mask_recount():
    m = sphere_mask(64, 20.0)
    count = 0
    for i in range(64):
        for j in range(64):
            for k in range(64):
                if (i + 0.5 - 32) ** 2 + (j + 0.5 - 32) ** 2 + (k + 0.5 - 32) ** 2 <= 400:
                    count += 1
    assert m.occupied_count == count


def test_surface_points_examples():
    one = VoxelMask(np.ones((1, 1, 1), bool), (2, 2, 2), (1, 1, 1))
    np.testing.assert_array_equal(mask_to_surface_points(one).points, [[2, 2, 2]])
    block = VoxelMask(np.ones((3, 3, 3), bool), (1, 1, 1), (0, 0, 0))
    pts = mask_to_surface_points(block).points
    assert len(pts) == 26
    assert not any(np.allclose(p, 1.5) for p in pts)
    with pytest.raises(EmptyMask):
        mask_to_surface_points(VoxelMask(np.zeros((2, 2, 2), bool), (1, 1, 1), (0, 0, 0)))


def test_surface_points_sphere_bruteforce():
    m = sphere_mask(32, 11.0, spacing=(0.5, 0.5, 0.5), origin=(-8, -8, -8))
    expected = oracles.boundary_voxels(m.data)  # already x-fastest order
    got = mask_to_surface_points(m).points
    ref = np.array([[-8 + (i + 0.5) * 0.5, -8 + (j + 0.5) * 0.5, -8 + (k + 0.5) * 0.5] for i, j, k in expected])
    np.testing.assert_array_equal(got, ref)


@given(masks)
def test_surface_voxels_bruteforce(data):
    got = np.argwhere(surface_voxels(data))
    exp = sorted(oracles.boundary_voxels(data))
    assert sorted(map(tuple, got.tolist())) == exp


def test_occupancy_examples():
    occ = points_to_occupancy(PointCloud([[3.0, -1.0, 7.0]]), 0.75)
    assert occ.dims == (5, 5, 5)
    assert occ.occupied_count == 1 and occ.data[2, 2, 2]
    occ = points_to_occupancy(PointCloud([[0.0, 0, 0], [10 * 0.3, 0, 0]]), 0.3)
    xs = np.argwhere(occ.data)[:, 0]
    assert xs.max() - xs.min() == 10
    with pytest.raises(InvalidVoxelSize):
        points_to_occupancy(PointCloud([[0.0, 0, 0]]), 0.0)
    with pytest.raises(EmptyInput):
        points_to_occupancy(PointCloud(np.zeros((0, 3))), 1.0)
    with pytest.raises(GridTooLarge):
        points_to_occupancy(PointCloud([[0.0, 0, 0], [100.0, 100, 100]]), 0.1, max_cells=10 ** 6)


def test_occupancy_sphere_binning_oracle():
    rng = np.random.default_rng(5)
    v = rng.normal(size=(16384, 3))
    pts = 3.0 * v / np.linalg.norm(v, axis=1)[:, None]
    vs = 0.3
    occ = points_to_occupancy(PointCloud(pts), vs)
    origin = np.asarray(occ.origin)
    cells = set()
    for p in pts:
        cells.add(tuple(int(np.floor((p[a] - origin[a]) / vs)) for a in range(3)))
    assert set(map(tuple, np.argwhere(occ.data).tolist())) == cells
    # two empty voxels of padding on every side
    occupied = np.argwhere(occ.data)
    assert occupied.min(axis=0).tolist() == [2, 2, 2]
    assert (np.array(occ.dims) - 1 - occupied.max(axis=0)).tolist() == [2, 2, 2]


def test_scalar_examples():
    rng = np.random.default_rng(1)
    m = VoxelMask(rng.random((8, 8, 8)) < 0.5, (1, 1, 1), (0, 0, 0))
    np.testing.assert_array_equal(occupancy_to_scalar(m, 0).data, m.data.astype(float))
    np.testing.assert_allclose(occupancy_to_scalar(m, 1).data, oracles.box_average(m.data, 1), rtol=0, atol=1e-15)
    full = VoxelMask(np.ones((7, 7, 7), bool), (1, 1, 1), (0, 0, 0))
    for r in (1, 2):
        vals = occupancy_to_scalar(full, r).data
        # zero padding: values reach 1 wherever the window stays inside the grid
        np.testing.assert_array_equal(vals[r:-r, r:-r, r:-r], 1.0)


@given(masks, st.integers(0, 2))
def test_scalar_bruteforce(data, r):
    m = VoxelMask(data, (1, 1, 1), (0, 0, 0))
    np.testing.assert_allclose(occupancy_to_scalar(m, r).data, oracles.box_average(data, r), rtol=0, atol=1e-15)


def test_roundtrip_surface_reoccupies():
    m = sphere_mask(20, 7.0, spacing=(1.5, 1.5, 1.5))
    shell = VoxelMask(surface_voxels(m.data), m.spacing, m.origin)
    pts = mask_to_surface_points(shell)
    occ = points_to_occupancy(pts, 1.5)
    a = np.argwhere(shell.data)
    b = np.argwhere(occ.data)
    np.testing.assert_array_equal(b - b.min(axis=0), a - a.min(axis=0))


def test_fill_enclosed():
    data = np.zeros((5, 5, 5), bool)
    data[1:4, 1:4, 1:4] = True
    data[2, 2, 2] = False
    filled = fill_enclosed(VoxelMask(data, (1, 1, 1), (0, 0, 0)))
    assert filled.data[2, 2, 2] and filled.occupied_count == 27


def test_largest_components_examples():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]]
    m = TriangleMesh(v, [[0, 1, 2], [3, 4, 5]])
    kept = largest_components(m, 1)
    np.testing.assert_array_equal(kept.vertices, v[:3])
    np.testing.assert_array_equal(kept.faces, [[0, 1, 2]])
    single = TriangleMesh(v[:3], [[0, 1, 2]])
    out = largest_components(single, 1)
    np.testing.assert_array_equal(out.faces, single.faces)
    np.testing.assert_array_equal(out.vertices, single.vertices)


def test_largest_components_union_find_oracle():
    rng = np.random.default_rng(2)
    faces = set()
    while len(faces) < 120:
        f = tuple(sorted(rng.choice(200, 3, replace=False)))
        faces.add(f)
    faces = [list(f) for f in sorted(faces)]
    m = TriangleMesh(rng.normal(size=(200, 3)), faces)
    labels = oracles.face_components(faces)
    groups = {}
    for i, lab in enumerate(labels):
        groups.setdefault(lab, []).append(i)
    ranked = sorted(groups.values(), key=lambda g: (-len(g), min(g)))
    for keep in (1, 3):
        want = sorted(i for g in ranked[:keep] for i in g)
        got = largest_components(m, keep)
        want_faces = m.vertices[np.asarray(faces)[want]]
        np.testing.assert_array_equal(got.vertices[got.faces], want_faces)
