"""Deterministic ratio-r point cloud upsampling.

Each stage densifies by midpoint interpolation toward nearest neighbours and
then optionally refines: ``mls`` projects onto local weighted least-squares
fits of the stage input, ``chamfer_oracle`` descends the pred-to-target
Chamfer term against a supplied reference. Ratios above 4 are composed from
stages of at most 4 (16 = 4 x 4).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import InsufficientPoints, InvalidArgument, UnsupportedRatio
from .geometry import PointCloud, normalize_to_unit_sphere
from .spatial import SpatialIndex

logger = logging.getLogger(__name__)

REFINE_MODES = ("none", "mls", "chamfer_oracle")
DUPLICATE_OFFSET = 1e-7
# neighbours closer than this are nudged copies, not distinct points
DISTINCT_TOLERANCE = 10 * DUPLICATE_OFFSET
MAX_STAGE_RATIO = 4
_MLS_CHUNK = 32768


@dataclass(frozen=True)
class UpsampleConfig:
    ratio: int = 4
    mls_k: int = 16
    mls_iterations: int = 3
    mls_degree: int = 2
    refine_mode: str = "mls"
    chamfer_steps: int = 50
    chamfer_step_size: float = 0.1

    def __post_init__(self):
        if self.ratio < 2:
            raise UnsupportedRatio(f"ratio must be at least 2, got {self.ratio}")
        if self.mls_k < 6:
            raise InvalidArgument("mls_k must be at least 6")
        if self.mls_iterations < 0:
            raise InvalidArgument("mls_iterations must be non-negative")
        if self.mls_degree not in (1, 2):
            raise InvalidArgument("mls_degree must be 1 (plane) or 2 (quadric)")
        if self.refine_mode not in REFINE_MODES:
            raise InvalidArgument(f"refine_mode must be one of {REFINE_MODES}")
        if not self.chamfer_step_size > 0:
            raise InvalidArgument("chamfer_step_size must be positive")
        if self.chamfer_steps < 0:
            raise InvalidArgument("chamfer_steps must be non-negative")
        stage_factors(self.ratio)


@dataclass(frozen=True, eq=False)
class UpsampleResult:
    dense: PointCloud
    provenance: list = field(default_factory=list)
    config_used: Optional[UpsampleConfig] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def parents(self) -> np.ndarray:
        """Index into the original input for every output point."""
        out = self.provenance[-1]
        for stage in reversed(self.provenance[:-1]):
            out = stage[out]
        return out


def stage_factors(ratio: int) -> list[int]:
    """Split ``ratio`` into stage factors no larger than 4, largest first."""
    if ratio < 2:
        raise UnsupportedRatio(f"ratio must be at least 2, got {ratio}")
    factors, rest = [], int(ratio)
    for f in (4, 3, 2):
        while rest % f == 0:
            factors.append(f)
            rest //= f
    if rest != 1:
        raise UnsupportedRatio(f"ratio {ratio} cannot be composed from stages of at most {MAX_STAGE_RATIO}")
    return sorted(factors, reverse=True)


def _points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def _distinct_neighbors(points: np.ndarray, count: int) -> np.ndarray:
    """``count`` nearest distinct points per point, by (distance, index).

    Points within ``DISTINCT_TOLERANCE`` count as copies of the query point.
    """
    n = len(points)
    index = SpatialIndex(points)
    k = min(n, count + 1)
    while True:
        nbr, dist = index.query_knn(points, k)
        valid = dist > DISTINCT_TOLERANCE
        enough = valid.sum(axis=1) >= count
        if enough.all() or k == n:
            break
        k = min(n, 2 * k)
    if not enough.all():
        raise InsufficientPoints(f"some points have fewer than {count} distinct neighbours")
    # stable pick of the first `count` valid columns per row
    rank = np.cumsum(valid, axis=1)
    pick = valid & (rank <= count)
    return nbr[pick].reshape(n, count)


def _midpoints(points: np.ndarray, ratio: int):
    n = len(points)
    if n < 4:
        raise InsufficientPoints("midpoint interpolation needs at least 4 points")
    if ratio < 2:
        raise UnsupportedRatio(f"ratio must be at least 2, got {ratio}")
    nbr = _distinct_neighbors(points, ratio - 1)
    src = np.repeat(np.arange(n), ratio - 1)
    dst = nbr.reshape(-1)
    mids = 0.5 * (points[src] + points[dst])
    out = np.empty((n, ratio, 3))
    out[:, 0] = points
    out[:, 1:] = mids.reshape(n, ratio - 1, 3)
    out = out.reshape(-1, 3)
    parents = np.repeat(np.arange(n), ratio)
    partner = np.full((n, ratio), -1, dtype=np.int64)
    partner[:, 1:] = nbr
    partner = partner.reshape(-1)

    # nudge later copies of coincident points along their parent->partner direction
    _, first, inverse = np.unique(out, axis=0, return_index=True, return_inverse=True)
    dup = first[inverse.reshape(-1)] != np.arange(len(out))
    dup &= partner >= 0
    if np.any(dup):
        direction = points[partner[dup]] - points[parents[dup]]
        direction /= np.linalg.norm(direction, axis=1)[:, None]
        out[dup] += DUPLICATE_OFFSET * direction
    return out, parents


def midpoint_interpolate(sparse, ratio: int) -> PointCloud:
    """Each point followed by midpoints toward its ``ratio - 1`` nearest distinct neighbours."""
    out, _ = _midpoints(_points(sparse), ratio)
    return PointCloud(out)


def _fit_and_project(q: np.ndarray, nbr_pts: np.ndarray, nbr_d: np.ndarray, degree: int):
    """Project each query onto the weighted LS fit of its neighbourhood.

    Returns ``(projected, ok)``; rows whose neighbourhood is (near) collinear
    are returned unmoved with ``ok`` False.
    """
    h = nbr_d.mean(axis=1)
    ok = h > 0
    h_safe = np.where(ok, h, 1.0)
    w = np.exp(-(nbr_d / h_safe[:, None]) ** 2)
    wsum = w.sum(axis=1)
    c = (w[:, :, None] * nbr_pts).sum(axis=1) / wsum[:, None]
    x = nbr_pts - c[:, None, :]
    cov = np.einsum("mk,mki,mkj->mij", w, x, x)
    evals, evecs = np.linalg.eigh(cov)
    # two vanishing eigenvalues: neighbours lie on a line
    scale = np.maximum(evals[:, 2], 1e-300)
    ok &= evals[:, 1] > 1e-12 * scale
    normal = evecs[:, :, 0]
    offset = ((q - c) * normal).sum(axis=1)
    proj = q - offset[:, None] * normal
    if degree == 2:
        t1, t2 = evecs[:, :, 2], evecs[:, :, 1]
        u = (x * t1[:, None, :]).sum(-1)
        v = (x * t2[:, None, :]).sum(-1)
        hgt = (x * normal[:, None, :]).sum(-1)
        basis = np.stack([np.ones_like(u), u, v, u * u, u * v, v * v], axis=-1)
        sw = np.sqrt(w)[:, :, None]
        A = basis * sw
        b = hgt * sw[:, :, 0]
        ata = np.einsum("mki,mkj->mij", A, A)
        atb = np.einsum("mki,mk->mi", A, b)
        # reject ill-conditioned quadrics, keep the plane projection there
        lam = np.linalg.eigvalsh(ata)
        good = (lam[:, 0] > 0) & (lam[:, -1] < 1e10 * lam[:, 0])
        coef = np.zeros((len(q), 6))
        if np.any(good):
            coef[good] = np.linalg.solve(ata[good], atb[good][..., None])[..., 0]
        qu = ((q - c) * t1).sum(-1)
        qv = ((q - c) * t2).sum(-1)
        qb = np.stack([np.ones_like(qu), qu, qv, qu * qu, qu * qv, qv * qv], axis=-1)
        height = (qb * coef).sum(-1)
        quad = c + qu[:, None] * t1 + qv[:, None] * t2 + height[:, None] * normal
        proj = np.where(good[:, None], quad, proj)
    proj = np.where(ok[:, None], proj, q)
    return proj, ok


def mls_project_points(points: np.ndarray, reference: np.ndarray, k: int, iterations: int,
                       degree: int = 2, index: Optional[SpatialIndex] = None):
    """Array version of :func:`mls_project`; returns ``(points, unmoved_count)``."""
    points = np.array(points, dtype=np.float64, copy=True).reshape(-1, 3)
    reference = np.asarray(reference, dtype=np.float64).reshape(-1, 3)
    if k > len(reference):
        raise InsufficientPoints(f"k={k} exceeds reference size {len(reference)}")
    index = index or SpatialIndex(reference)
    unmoved = 0
    for _ in range(iterations):
        for s in range(0, len(points), _MLS_CHUNK):
            q = points[s:s + _MLS_CHUNK]
            nbr, d = index.query_knn(q, k)
            proj, ok = _fit_and_project(q, reference[nbr], d, degree)
            points[s:s + _MLS_CHUNK] = proj
            unmoved += int(np.count_nonzero(~ok))
    return points, unmoved


def mls_project(points, reference, k: int = 16, iterations: int = 3, degree: int = 2) -> PointCloud:
    """Move points onto Gaussian-weighted least-squares fits of their k nearest reference points.

    The bandwidth per query is its mean k-NN distance. Degree 1 fits planes,
    degree 2 fits a quadric height field over the plane frame. Neighbourhoods
    that are collinear leave the point where it is (logged, not raised).
    """
    out, unmoved = mls_project_points(_points(points), _points(reference), k, iterations, degree)
    if unmoved:
        logger.debug("mls: %d point-iterations left unmoved (rank-deficient neighbourhood)", unmoved)
    return PointCloud(out)


def _chamfer(points: np.ndarray, target: np.ndarray, target_index: SpatialIndex) -> float:
    d_pt = target_index.query_nearest(points)[1]
    d_tp = SpatialIndex(points).query_nearest(target)[1]
    return float(np.mean(d_pt ** 2) + np.mean(d_tp ** 2))


def chamfer_gradient_refine_points(points: np.ndarray, target: np.ndarray, steps: int = 50,
                                   step_size: float = 0.1, decay: float = 0.95,
                                   max_backtracks: int = 8):
    """Array version of :func:`chamfer_gradient_refine`; returns ``(points, cd_history)``."""
    points = np.array(points, dtype=np.float64, copy=True).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0 or len(target) == 0:
        raise InvalidArgument("chamfer refinement needs non-empty point sets")
    index = SpatialIndex(target)
    cd = _chamfer(points, target, index)
    history = [cd]
    eta = float(step_size)
    for _ in range(steps):
        nn = index.query_nearest(points)[0]
        grad = 2.0 * (points - target[nn])
        trial_eta = eta
        for _ in range(max_backtracks + 1):
            trial = points - trial_eta * grad
            trial_cd = _chamfer(trial, target, index)
            if trial_cd <= cd:
                points, cd = trial, trial_cd
                break
            trial_eta *= 0.5
        history.append(cd)
        eta *= decay
    return points, history


def chamfer_gradient_refine(points, target, steps: int = 50, step_size: float = 0.1) -> PointCloud:
    """Gradient descent of the pred-to-target Chamfer term.

    Every point moves by ``-step_size * 2 (p - nn_target(p))`` and the step
    decays by 0.95 per iteration. A step that would raise the symmetric
    Chamfer distance is halved (up to 8 times) and otherwise skipped, so the
    distance never increases.
    """
    out, _ = chamfer_gradient_refine_points(_points(points), _points(target), steps, step_size)
    return PointCloud(out)


def upsample(sparse: PointCloud, config: UpsampleConfig = UpsampleConfig(),
             reference: Optional[PointCloud] = None) -> UpsampleResult:
    """Upsample ``sparse`` by ``config.ratio``.

    Work happens in the unit-sphere frame of the input (the reference, if
    any, is mapped with the same transform) and results are mapped back.
    """
    if config.refine_mode == "chamfer_oracle" and reference is None:
        raise InvalidArgument("chamfer_oracle refinement requires a reference cloud")
    normalized, transform = normalize_to_unit_sphere(PointCloud(_points(sparse)))
    current = normalized.points
    ref = None if reference is None else transform.apply(_points(reference))
    provenance, unmoved = [], 0
    for factor in stage_factors(config.ratio):
        dense, parents = _midpoints(current, factor)
        if config.refine_mode == "mls":
            dense, n_bad = mls_project_points(dense, current, min(config.mls_k, len(current)),
                                              config.mls_iterations, config.mls_degree)
            unmoved += n_bad
        elif config.refine_mode == "chamfer_oracle":
            dense, _ = chamfer_gradient_refine_points(dense, ref, config.chamfer_steps, config.chamfer_step_size)
        provenance.append(parents)
        current = dense
    out = PointCloud(transform.invert(current))
    diagnostics = {"stages": len(provenance), "mls_unmoved": unmoved, "normalization": transform.as_dict()}
    return UpsampleResult(out, provenance, replace(config), diagnostics)
