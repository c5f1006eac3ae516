import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from medpu.errors import DegenerateExtent, EmptyInput, ZeroAreaFace
from medpu.geometry import (
    AABB,
    NormalizationTransform,
    PointCloud,
    TriangleMesh,
    bounding_box,
    face_normal,
    normalize_to_unit_sphere,
)

coords = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
clouds = arrays(np.float64, st.tuples(st.integers(2, 60), st.just(3)), elements=coords)


def test_point_cloud_rejects_non_finite():
    with pytest.raises(ValueError):
        PointCloud([[0.0, np.nan, 0.0]])


def test_point_cloud_requires_unit_normals():
    with pytest.raises(ValueError):
        PointCloud([[0, 0, 0]], [[0, 0, 2.0]])
    c = PointCloud([[0, 0, 0]], [[0, 0, 1.0]])
    assert c.has_normals


def test_point_cloud_is_read_only():
    c = PointCloud(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        c.points[0, 0] = 1.0


def test_mesh_validation():
    v = np.eye(3)
    with pytest.raises(ValueError):
        TriangleMesh(v, [[0, 1, 3]])
    with pytest.raises(ValueError):
        TriangleMesh(v, [[0, 1, 1]])
    with pytest.raises(ValueError):
        TriangleMesh(v, [[0, 1, 2], [2, 0, 1]])
    TriangleMesh(v, [[0, 1, 2]])


def test_normalize_identity_case():
    pts = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 0.5, 0], [0, -0.5, 0]])
    out, t = normalize_to_unit_sphere(PointCloud(pts))
    np.testing.assert_allclose(t.center, 0, atol=1e-15)
    assert t.scale == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(out.points, pts, atol=1e-15)


def test_normalize_two_points():
    out, t = normalize_to_unit_sphere(PointCloud([[2.0, 0, 0], [4.0, 0, 0]]))
    np.testing.assert_allclose(out.points, [[-1, 0, 0], [1, 0, 0]])
    np.testing.assert_allclose(t.center, [3, 0, 0])
    assert t.scale == 1.0


def test_normalize_cube_corners_recomputed():
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    out, t = normalize_to_unit_sphere(PointCloud(corners))
    centroid = sum(corners) / 8
    radius = max(np.sqrt(((c - centroid) ** 2).sum()) for c in corners)
    np.testing.assert_allclose(out.points, (corners - centroid) / radius, atol=1e-15)
    assert np.abs(out.points.mean(axis=0)).max() < 1e-9
    assert np.linalg.norm(out.points, axis=1).max() == pytest.approx(1.0, abs=1e-9)


def test_normalize_errors():
    with pytest.raises(EmptyInput):
        normalize_to_unit_sphere(PointCloud(np.zeros((0, 3))))
    with pytest.raises(DegenerateExtent):
        normalize_to_unit_sphere(PointCloud([[1.0, 2, 3]] * 4))


@given(clouds)
def test_normalize_roundtrip_and_post(pts):
    if np.ptp(pts, axis=0).max() < 1e-3:
        return
    out, t = normalize_to_unit_sphere(PointCloud(pts))
    assert np.abs(out.points.mean(axis=0)).max() < 1e-9
    assert abs(np.linalg.norm(out.points, axis=1).max() - 1.0) < 1e-9
    back = t.invert(out.points)
    scale = max(1.0, np.abs(pts).max())
    assert np.abs(back - pts).max() <= 1e-9 * scale


def test_transform_validates_scale():
    with pytest.raises(ValueError):
        NormalizationTransform(np.zeros(3), 0.0)


def test_bounding_box_examples():
    box = bounding_box(PointCloud([[1.0, 2, 3]]))
    np.testing.assert_array_equal(box.min, [1, 2, 3])
    np.testing.assert_array_equal(box.max, [1, 2, 3])
    box = bounding_box(PointCloud([[0.0, 0, 0], [1, 2, 3]]))
    np.testing.assert_array_equal(box.min, [0, 0, 0])
    np.testing.assert_array_equal(box.max, [1, 2, 3])
    with pytest.raises(EmptyInput):
        bounding_box(PointCloud(np.zeros((0, 3))))


def test_bounding_box_bruteforce():
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(1000, 3))
    box = bounding_box(PointCloud(pts))
    lo = [min(p[a] for p in pts) for a in range(3)]
    hi = [max(p[a] for p in pts) for a in range(3)]
    np.testing.assert_array_equal(box.min, lo)
    np.testing.assert_array_equal(box.max, hi)


@given(clouds, st.randoms(use_true_random=False))
def test_bounding_box_permutation_invariant(pts, rnd):
    perm = list(range(len(pts)))
    rnd.shuffle(perm)
    a, b = bounding_box(PointCloud(pts)), bounding_box(PointCloud(pts[perm]))
    np.testing.assert_array_equal(a.min, b.min)
    np.testing.assert_array_equal(a.max, b.max)


def test_aabb_invariant():
    with pytest.raises(ValueError):
        AABB(np.array([1.0, 0, 0]), np.array([0.0, 0, 0]))


def test_face_normal_examples():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
    np.testing.assert_array_equal(face_normal(TriangleMesh(v, [[0, 1, 2]]), 0), [0, 0, 1])
    np.testing.assert_array_equal(face_normal(TriangleMesh(v, [[0, 2, 1]]), 0), [0, 0, -1])
    with pytest.raises(ZeroAreaFace):
        face_normal(TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]]), 0)


@given(arrays(np.float64, (3, 3), elements=st.floats(-10, 10)))
def test_face_normal_orthogonal_and_flips(tri):
    a, b, c = tri
    if np.linalg.norm(np.cross(b - a, c - a)) < 1e-3:
        return
    n = face_normal(TriangleMesh(tri, [[0, 1, 2]]), 0)
    assert abs(np.linalg.norm(n) - 1) < 1e-12
    assert abs(np.dot(n, b - a)) < 1e-9 * max(1, np.linalg.norm(b - a))
    assert abs(np.dot(n, c - a)) < 1e-9 * max(1, np.linalg.norm(c - a))
    flipped = face_normal(TriangleMesh(tri, [[0, 2, 1]]), 0)
    np.testing.assert_array_equal(flipped, -n)


def test_mesh_helpers():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [5, 5, 5], [6, 5, 5], [5, 6, 5]]
    m = TriangleMesh(v, [[0, 1, 2], [1, 3, 2], [4, 5, 6]])
    edges, counts = m.edges()
    assert len(edges) == 8 and counts.tolist().count(2) == 1
    assert m.n_components() == 2
    np.testing.assert_array_equal(m.face_components(), [0, 0, 1])
    np.testing.assert_allclose(m.face_areas(), [0.5, 0.5, 0.5])
