import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from medpu import phantoms
from medpu.errors import InsufficientPoints, InvalidArgument, UnsupportedRatio
from medpu.geometry import PointCloud
from medpu.metrics import chamfer_distance
from medpu.sampling import farthest_point_sample, poisson_disk_sample, sample_surface_uniform
from medpu.upsample import (
    DUPLICATE_OFFSET,
    UpsampleConfig,
    chamfer_gradient_refine,
    chamfer_gradient_refine_points,
    midpoint_interpolate,
    mls_project,
    mls_project_points,
    stage_factors,
    upsample,
)

seeds = st.integers(0, 2 ** 32 - 1)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def test_collinear_example():
    pts = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
    out = midpoint_interpolate(pts, 2).points
    assert len(out) == 8
    xs = out[:, 0]
    np.testing.assert_array_equal(xs[::2], [0, 1, 2, 3])
    # 0 -> 1, 1 -> 0 (tie with 2, lower index), 2 -> 1 (tie with 3), 3 -> 2
    np.testing.assert_allclose(xs[1::2], [0.5, 0.5 - DUPLICATE_OFFSET, 1.5, 2.5], rtol=0, atol=1e-15)
    assert len(np.unique(out, axis=0)) == 8


def test_midpoint_subset_and_counts():
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(100, 3))
    out = midpoint_interpolate(pts, 2).points
    rows = {tuple(r) for r in out.tolist()}
    assert all(tuple(r) in rows for r in pts.tolist())
    g = np.stack(np.meshgrid(np.arange(10.0), np.arange(10.0), [0.0], indexing="ij"), -1).reshape(-1, 3)
    assert len(midpoint_interpolate(g, 4)) == 400
    with pytest.raises(InsufficientPoints):
        midpoint_interpolate(pts[:3], 2)


@given(seeds, st.sampled_from([2, 3, 4]))
def test_midpoints_match_bruteforce_neighbours(seed, ratio):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 4, size=(30, 3)).astype(float)
    pts = np.unique(pts, axis=0)
    if len(pts) < 5:
        return
    out = midpoint_interpolate(pts, ratio).points.reshape(len(pts), ratio, 3)
    for i, p in enumerate(pts):
        nbrs = [j for j, _ in oracles.knn(pts, p, ratio)[1:]]  # skip self
        want = 0.5 * (p + pts[nbrs])
        np.testing.assert_allclose(out[i, 1:], want, rtol=0, atol=2 * DUPLICATE_OFFSET)


def plane_reference(n=60):
    g = (np.arange(n) - n / 2) / n
    x, y = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([x.ravel(), y.ravel(), np.zeros(n * n)])


@pytest.mark.parametrize("degree", [1, 2])
def test_mls_plane_fixed_point(degree):
    ref = plane_reference()
    pts = ref[::37]
    out, _ = mls_project_points(pts, ref, 16, 1, degree)
    assert np.abs(out - pts).max() < 1e-9


@pytest.mark.parametrize("degree", [1, 2])
def test_mls_height_projection(degree):
    ref = plane_reference()
    q = np.array([[0.013, -0.021, 0.05], [0.1, 0.2, -0.03]])
    out = mls_project(q, ref, 16, 3, degree).points
    assert np.abs(out[:, 2]).max() < 1e-6
    np.testing.assert_allclose(out[:, :2], q[:, :2], atol=1e-6)


def test_mls_noisy_sphere():
    rng = np.random.default_rng(1)
    d = rng.normal(size=(500, 3))
    d /= np.linalg.norm(d, axis=1)[:, None]
    noisy = d * (1 + rng.normal(scale=0.02, size=(500, 1)))
    ref = poisson_disk_sample(phantoms.icosphere(5), 8192, 0).points
    out = mls_project(noisy, ref).points
    before = np.abs(np.linalg.norm(noisy, axis=1) - 1).mean()
    after = np.abs(np.linalg.norm(out, axis=1) - 1).mean()
    assert after < before


def test_mls_errors_and_degenerate():
    with pytest.raises(InsufficientPoints):
        mls_project(np.zeros((2, 3)), np.eye(3), k=16)
    line = np.column_stack([np.arange(20.0), np.zeros(20), np.zeros(20)])
    out, unmoved = mls_project_points([[3.3, 1.0, 0.0]], line, 8, 3)
    np.testing.assert_array_equal(out, [[3.3, 1.0, 0.0]])
    assert unmoved == 3


def test_chamfer_refine_subset_is_fixed():
    rng = np.random.default_rng(0)
    target = rng.normal(size=(300, 3))
    pts = target[::7]
    np.testing.assert_array_equal(chamfer_gradient_refine(pts, target).points, pts)


def test_chamfer_refine_single_point():
    # one point, one target: p_k - t = (1 - 2 * eta_0 * 0.95^k ...) products, closed form below
    p0, t = np.array([[3.0, -1.0, 2.0]]), np.array([[0.0, 0.0, 0.0]])
    d0 = np.linalg.norm(p0 - t)
    for eta in (0.1, 0.25):
        steps = 200
        out, hist = chamfer_gradient_refine_points(p0, t, steps, eta)
        factor = np.prod([abs(1 - 2 * eta * 0.95 ** k) for k in range(steps)])
        assert np.linalg.norm(out - t) == pytest.approx(d0 * factor, rel=1e-9)
    out, _ = chamfer_gradient_refine_points(p0, t, 200, 0.25)
    assert np.linalg.norm(out - t) < 0.01 * d0


@given(seeds)
def test_chamfer_refine_monotone(seed):
    rng = np.random.default_rng(seed)
    target = rng.normal(size=(200, 3))
    pts = rng.normal(size=(50, 3)) * 1.5
    _, hist = chamfer_gradient_refine_points(pts, target, 30, float(rng.uniform(0.01, 1.0)))
    assert all(b <= a for a, b in zip(hist, hist[1:]))


def test_chamfer_refine_sphere_decreases_early():
    target = poisson_disk_sample(phantoms.icosphere(5), 8192, 0).points
    sparse = poisson_disk_sample(phantoms.icosphere(5, 1.05), 512, 1).points
    _, hist = chamfer_gradient_refine_points(sparse, target, 10, 0.1)
    assert all(b < a for a, b in zip(hist, hist[1:]))


def test_stage_factors():
    assert stage_factors(16) == [4, 4]
    assert stage_factors(4) == [4]
    assert stage_factors(2) == [2]
    for bad in (1, 5, 7):
        with pytest.raises(UnsupportedRatio):
            stage_factors(bad)


def test_config_validation():
    with pytest.raises(UnsupportedRatio):
        UpsampleConfig(ratio=1)
    with pytest.raises(InvalidArgument):
        UpsampleConfig(mls_k=4)
    with pytest.raises(InvalidArgument):
        UpsampleConfig(refine_mode="magic")
    with pytest.raises(InvalidArgument):
        UpsampleConfig(chamfer_step_size=0)
    with pytest.raises(InvalidArgument):
        upsample(PointCloud(np.eye(4, 3)), UpsampleConfig(refine_mode="chamfer_oracle"))


def torus_cloud(n, seed):
    return poisson_disk_sample(phantoms.torus(1.0, 0.35, 96, 48), n, seed)


@pytest.mark.parametrize("ratio", [2, 4, 16])
@pytest.mark.parametrize("mode", ["none", "mls", "chamfer_oracle"])
def test_upsample_cardinality(ratio, mode):
    sparse = torus_cloud(256, 0)
    ref = torus_cloud(2048, 1) if mode == "chamfer_oracle" else None
    res = upsample(sparse, UpsampleConfig(ratio=ratio, refine_mode=mode, chamfer_steps=5), ref)
    assert len(res.dense) == ratio * 256
    assert len(res.provenance) == len(stage_factors(ratio))
    assert np.bincount(res.parents, minlength=256).tolist() == [ratio] * 256


def test_upsample_none_is_midpoint():
    sparse = torus_cloud(256, 0)
    a = upsample(sparse, UpsampleConfig(ratio=4, refine_mode="none")).dense.points
    # duplicate nudges are applied in the normalized frame, so they differ in size here
    b = midpoint_interpolate(sparse, 4).points
    np.testing.assert_allclose(a, b, rtol=0, atol=2 * DUPLICATE_OFFSET)


def test_mls_beats_midpoint_on_torus():
    sparse = torus_cloud(512, 3)
    target = torus_cloud(8192, 4)
    mls = upsample(sparse, UpsampleConfig(ratio=4, refine_mode="mls")).dense
    mid = midpoint_interpolate(sparse, 4)
    assert chamfer_distance(mls, target) < chamfer_distance(mid, target)


def test_upsample_determinism():
    sparse = torus_cloud(300, 5)
    a = upsample(sparse, UpsampleConfig(ratio=16)).dense.points
    b = upsample(sparse, UpsampleConfig(ratio=16)).dense.points
    assert a.tobytes() == b.tobytes()


@given(seeds)
def test_upsample_rigid_equivariance(seed):
    rng = np.random.default_rng(seed)
    sparse = farthest_point_sample(sample_surface_uniform(phantoms.icosphere(3), 2000, seed % 1000), 200, 0)
    rot, shift = random_rotation(rng), rng.normal(size=3) * 5
    cfg = UpsampleConfig(ratio=4)
    a = upsample(sparse, cfg).dense.points
    b = upsample(PointCloud(sparse.points @ rot.T + shift), cfg).dense.points
    np.testing.assert_allclose(b, a @ rot.T + shift, atol=1e-6)
