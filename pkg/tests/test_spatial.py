import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from medpu.errors import EmptyInput, InsufficientPoints, InvalidRadius
from medpu.geometry import PointCloud
from medpu.spatial import SpatialIndex, build, worker_count

grid_coords = st.integers(-4, 4).map(float)
small_clouds = arrays(np.float64, st.tuples(st.integers(1, 40), st.just(3)), elements=grid_coords)


def test_single_point():
    idx = build(PointCloud([[1.0, 2, 3]]))
    for q in ([0, 0, 0], [10, -3, 2]):
        i, d = idx.nearest(q)
        assert i == 0
        assert d == pytest.approx(np.linalg.norm(np.subtract(q, [1, 2, 3])))


def test_grid_points_find_themselves():
    pts = np.array([[x, y, 0] for x in range(5) for y in range(2)], dtype=float)
    idx = build(PointCloud(pts))
    for i, p in enumerate(pts):
        assert idx.nearest(p) == (i, 0.0)


def test_empty_cloud():
    with pytest.raises(EmptyInput):
        build(PointCloud(np.zeros((0, 3))))


def test_tie_goes_to_lowest_index():
    idx = build(PointCloud([[1.0, 0, 0], [-1.0, 0, 0]]))
    assert idx.nearest([0, 0, 0]) == (0, 1.0)
    idx = build(PointCloud([[-1.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0]]))
    assert idx.nearest([0, 0, 0])[0] == 0


def test_random_nearest_matches_bruteforce():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (5000, 3))
    q = rng.uniform(-1.2, 1.2, (200, 3))
    i, d = build(PointCloud(pts)).query_nearest(q)
    bi, bd = oracles.nearest(q, pts)
    np.testing.assert_array_equal(i, bi)
    np.testing.assert_array_equal(d, bd)


def test_k_nearest_examples():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(30, 3))
    idx = build(PointCloud(pts))
    q = rng.normal(size=3)
    assert idx.k_nearest(q, 30) == oracles.knn(pts, q, 30)
    assert idx.k_nearest(q, 1) == [idx.nearest(q)]
    with pytest.raises(InsufficientPoints):
        idx.k_nearest(q, 31)


def test_radius_examples():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 2, 0]])
    idx = build(PointCloud(pts))
    assert idx.radius_query([0.5, 0.5, 0.5], 0.0) == []
    assert [i for i, _ in idx.radius_query([0, 0, 0], 0.0)] == [0]
    assert [i for i, _ in idx.radius_query([1, 0, 0], 10.0)] == [0, 1, 2]
    with pytest.raises(InvalidRadius):
        idx.radius_query([0, 0, 0], -1.0)


@given(small_clouds, arrays(np.float64, (5, 3), elements=st.integers(-5, 5).map(lambda v: v / 2)),
       st.integers(1, 40))
def test_oracle_equivalence_with_ties(pts, queries, k):
    # integer grids create many exact distance ties
    k = min(k, len(pts))
    idx = SpatialIndex(pts)
    for q in queries:
        assert idx.nearest(q) == tuple(oracles.knn(pts, q, 1)[0])
        assert idx.k_nearest(q, k) == oracles.knn(pts, q, k)
        d = oracles.dist_matrix(q[None], pts)[0]
        for r in (0.0, 0.5, 1.0, 2.5):
            assert [i for i, _ in idx.radius_query(q, r)] == [i for i in range(len(pts)) if d[i] <= r]


@given(small_clouds, st.sampled_from([1, 2, 8, 64]))
def test_results_independent_of_leafsize(pts, leaf):
    q = pts + 0.25
    a = SpatialIndex(pts, leafsize=leaf).query_knn(q, min(3, len(pts)))
    b = SpatialIndex(pts).query_knn(q, min(3, len(pts)))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("MEDPU_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.delenv("MEDPU_THREADS")
    assert worker_count() == 1
