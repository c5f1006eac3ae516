import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from medpu import phantoms
from medpu.errors import DegenerateMesh, EmptyInput
from medpu.geometry import TriangleMesh
from medpu.sampling import sample_surface_uniform
from medpu.surface_distance import TriangleBVH, closest_points_on_triangles, point_to_mesh_distances

BIG = TriangleMesh([[-10.0, -10, 0], [10, -10, 0], [0, 10, 0]], [[0, 1, 2]])


def test_height_over_interior():
    np.testing.assert_allclose(point_to_mesh_distances([[0.5, 0.2, 3.0], [1, 1, -2.5]], BIG), [3.0, 2.5])


def test_beyond_edge_and_vertex():
    tri = TriangleMesh([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    d = point_to_mesh_distances([[0.5, -2, 0], [2, 0, 1], [-1, -1, 0], [1, 1, 0]], tri)
    np.testing.assert_allclose(d, [2.0, np.sqrt(2), np.sqrt(2), np.sqrt(0.5)], rtol=1e-14)


def test_points_on_mesh_are_zero():
    mesh = phantoms.torus(1.0, 0.3, 48, 24)
    pts = sample_surface_uniform(mesh, 500, 0).points
    assert point_to_mesh_distances(pts, mesh).max() < 1e-9


def test_errors():
    with pytest.raises(DegenerateMesh):
        TriangleBVH(TriangleMesh([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]]))
    with pytest.raises(EmptyInput):
        point_to_mesh_distances(np.zeros((0, 3)), BIG)


def test_zero_area_faces_use_segments():
    mesh = TriangleMesh([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 0, 5], [1, 0, 5], [0, 1, 5]],
                        [[0, 1, 2], [3, 4, 5]])
    np.testing.assert_allclose(point_to_mesh_distances([[1.0, 1, 0]], mesh), [1.0])


@given(st.integers(0, 2 ** 32 - 1))
def test_closest_point_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=(3, 3))
    p = rng.normal(size=(64, 3)) * 2
    q = closest_points_on_triangles(p, a, b, c)
    got = np.linalg.norm(p - q, axis=1)
    want = np.array([oracles.point_triangle(x, a, b, c) for x in p])
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-15)


def test_bvh_equals_bruteforce_over_faces():
    rng = np.random.default_rng(3)
    mesh = phantoms.icosphere(3)
    v = mesh.vertices + rng.normal(scale=0.03, size=mesh.vertices.shape)
    mesh = TriangleMesh(v, mesh.faces)
    q = rng.normal(size=(150, 3)) * 1.3
    got = point_to_mesh_distances(q, mesh)
    want = TriangleBVH(mesh).distances_bruteforce(q)
    np.testing.assert_array_equal(got, want)
    ref = np.array([oracles.point_mesh(x, mesh.vertices, mesh.faces) for x in q[:30]])
    np.testing.assert_allclose(got[:30], ref, rtol=1e-12)


@pytest.mark.parametrize("leaf", [1, 4, 32])
def test_leaf_size_independence(leaf):
    rng = np.random.default_rng(1)
    mesh = phantoms.torus(1.0, 0.4, 32, 16)
    q = rng.normal(size=(200, 3))
    np.testing.assert_array_equal(TriangleBVH(mesh, leaf).distances(q), TriangleBVH(mesh).distances_bruteforce(q))
