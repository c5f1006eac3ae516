"""Point-set and mesh-quality metrics.

Point-set metrics: Chamfer (squared, per-set means), Hausdorff, point-to-surface,
F-score, normal consistency and their edge-restricted variants. Mesh metrics:
area-length ratio, manifoldness rate and connected-component discrepancy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateMesh, EmptyInput, InvalidThreshold, MissingNormals
from .geometry import PointCloud, TriangleMesh, unit_sphere_transform
from .sampling import poisson_disk_sample
from .spatial import SpatialIndex
from .surface_distance import point_to_mesh_distances

METRIC_NAMES = ("alr", "cc_diff", "cd", "ecd", "ef1", "f1", "hd", "mr", "nc", "p2f")
DEFAULT_TAU = 0.01
DEFAULT_EDGE_ANGLE = 30.0
EDGE_NEIGHBORS = 10
ALR_FORMULA = "4*sqrt(3)*area/(l1^2+l2^2+l3^2)"


def _points(x) -> np.ndarray:
    return x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64).reshape(-1, 3)


def _require(*sets):
    for s in sets:
        if len(s) == 0:
            raise EmptyInput("metric needs non-empty point sets")


def nn_distances(src, dst) -> np.ndarray:
    """For every point of ``src``, the distance to its nearest point in ``dst``."""
    src, dst = _points(src), _points(dst)
    _require(src, dst)
    return SpatialIndex(dst).query_nearest(src)[1]


def chamfer_distance(p, q) -> float:
    pp, qq = _points(p), _points(q)
    _require(pp, qq)
    d_pq = nn_distances(pp, qq)
    d_qp = nn_distances(qq, pp)
    return float(np.mean(d_pq ** 2) + np.mean(d_qp ** 2))


def hausdorff_distance(p, q) -> float:
    pp, qq = _points(p), _points(q)
    _require(pp, qq)
    return float(max(nn_distances(pp, qq).max(), nn_distances(qq, pp).max()))


def point_to_surface(p, surface: TriangleMesh) -> float:
    pp = _points(p)
    _require(pp)
    return float(np.mean(point_to_mesh_distances(pp, surface)))


def _check_tau(tau):
    if not tau > 0 or not math.isfinite(tau):
        raise InvalidThreshold(f"distance threshold must be positive, got {tau}")


def f_score(p, q, tau: float) -> float:
    """Harmonic mean of the fractions of each set within ``tau`` of the other."""
    _check_tau(tau)
    pp, qq = _points(p), _points(q)
    _require(pp, qq)
    precision = float(np.mean(nn_distances(pp, qq) <= tau))
    recall = float(np.mean(nn_distances(qq, pp) <= tau))
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _need_normals(*clouds):
    for c in clouds:
        if not isinstance(c, PointCloud) or c.normals is None:
            raise MissingNormals("metric requires point normals")


def normal_consistency(p: PointCloud, q: PointCloud) -> float:
    _need_normals(p, q)
    _require(p.points, q.points)
    i_pq = SpatialIndex(q.points).query_nearest(p.points)[0]
    i_qp = SpatialIndex(p.points).query_nearest(q.points)[0]
    a = np.abs((p.normals * q.normals[i_pq]).sum(axis=1)).mean()
    b = np.abs((q.normals * p.normals[i_qp]).sum(axis=1)).mean()
    return float(0.5 * (a + b))


@dataclass(frozen=True, eq=False)
class EdgeCloud:
    cloud: PointCloud
    indices: np.ndarray
    threshold_used: float

    def __len__(self) -> int:
        return len(self.indices)


def detect_edges(cloud: PointCloud, angle_threshold_deg: float = DEFAULT_EDGE_ANGLE,
                 k: int = EDGE_NEIGHBORS) -> EdgeCloud:
    """Flag points whose normal turns sharply against one of their k neighbours.

    A point is an edge point when the smallest ``|n_p . n_q|`` over its ``k``
    nearest other points falls below ``cos(angle_threshold_deg)``. A threshold
    of 0 disables detection.
    """
    _need_normals(cloud)
    if not 0 <= angle_threshold_deg <= 90:
        raise InvalidThreshold("edge angle must lie in [0, 90] degrees")
    n = len(cloud)
    if n < 2 or angle_threshold_deg == 0:
        idx = np.zeros(0, dtype=np.int64)
        return EdgeCloud(cloud.subset(idx), idx, float(angle_threshold_deg))
    kk = min(k + 1, n)
    nbr, _ = SpatialIndex(cloud.points).query_knn(cloud.points, kk)
    own = nbr == np.arange(n)[:, None]
    # drop self (or, if self was crowded out by duplicates, the farthest candidate)
    drop = np.where(own.any(axis=1), own.argmax(axis=1), kk - 1)
    keep = np.ones_like(nbr, dtype=bool)
    keep[np.arange(n), drop] = False
    nbr = nbr[keep].reshape(n, kk - 1)
    dots = np.abs((cloud.normals[:, None, :] * cloud.normals[nbr]).sum(axis=-1))
    is_edge = dots.min(axis=1) < math.cos(math.radians(angle_threshold_deg))
    idx = np.nonzero(is_edge)[0]
    return EdgeCloud(cloud.subset(idx), idx, float(angle_threshold_deg))


def edge_chamfer(p: PointCloud, q: PointCloud, angle_threshold: float = DEFAULT_EDGE_ANGLE,
                 tau: float = DEFAULT_TAU, edges=None) -> tuple[float, float]:
    """Chamfer distance and F-score between the detected edge subsets.

    Both empty gives ``(0, 1)``; exactly one empty gives ``(inf, 0)``.
    ``edges`` may pass precomputed ``(EdgeCloud, EdgeCloud)``.
    """
    _need_normals(p, q)
    ep, eq = edges if edges is not None else (detect_edges(p, angle_threshold), detect_edges(q, angle_threshold))
    if len(ep) == 0 and len(eq) == 0:
        return 0.0, 1.0
    if len(ep) == 0 or len(eq) == 0:
        return math.inf, 0.0
    return chamfer_distance(ep.cloud, eq.cloud), f_score(ep.cloud, eq.cloud, tau)


def face_alr(mesh: TriangleMesh) -> np.ndarray:
    tri = mesh.triangles()
    l2 = ((tri[:, [1, 2, 0]] - tri) ** 2).sum(axis=-1).sum(axis=1)
    area = mesh.face_areas()
    q = np.zeros(len(tri))
    ok = (area > 0) & (l2 > 0)
    q[ok] = 4.0 * math.sqrt(3.0) * area[ok] / l2[ok]
    return np.clip(q, 0.0, 1.0)


def area_length_ratio(mesh: TriangleMesh) -> float:
    """Mean per-face ``4 sqrt(3) A / sum(l^2)``; zero-area faces count as 0."""
    if mesh.n_faces == 0 or not np.any(mesh.face_areas() > 0):
        raise DegenerateMesh("area-length ratio needs a face with positive area")
    return float(face_alr(mesh).mean())


def manifoldness_rate(mesh: TriangleMesh) -> float:
    """Fraction of undirected edges shared by exactly two faces."""
    if mesh.n_faces == 0:
        raise DegenerateMesh("manifoldness rate needs at least one face")
    _, counts = mesh.edges()
    return float(np.count_nonzero(counts == 2) / len(counts))


def connected_component_diff(mesh: TriangleMesh, expected: int) -> int:
    if expected < 1:
        raise ValueError("expected component count must be at least 1")
    return abs(mesh.n_components() - int(expected))


@dataclass
class MetricReport:
    values: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def rows(self, case: str) -> list[tuple]:
        out = []
        for name in sorted(self.values):
            out.append((case, name, format_value(self.values[name]), self.metadata.get(name, "")))
        return out


def format_value(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isinf(v) or math.isnan(v):
        return "n/a"
    return repr(v)


def write_report_csv(path, reports: dict) -> None:
    """Write ``{case: MetricReport}`` as ``case,metric,value,meta`` rows."""
    rows = []
    for case in sorted(reports):
        rows.extend(reports[case].rows(case))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("case", "metric", "value", "meta"))
        writer.writerows(rows)


def read_report_csv(path) -> dict:
    out: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            value = row["value"]
            out.setdefault(row["case"], {})[row["metric"]] = math.inf if value == "n/a" else float(value)
    return out


def _meta(**items) -> str:
    return ";".join(f"{k}={v}" for k, v in items.items())


def evaluate_pair(pred_mesh: TriangleMesh, gt_mesh: TriangleMesh, sample_count: int = 16384, seed: int = 0,
                  tau: float = DEFAULT_TAU, edge_angle: float = DEFAULT_EDGE_ANGLE,
                  expected_cc: Optional[int] = None) -> MetricReport:
    """Full metric report for a reconstructed mesh against a reference mesh.

    Both meshes are mapped by the reference's unit-sphere transform, then
    Poisson-disk sampled with face normals. ``tau`` is a fraction of the
    normalized reference bounding-box diagonal.
    """
    return evaluate_pairs({"pred": pred_mesh}, gt_mesh, sample_count, seed, tau, edge_angle, expected_cc)["pred"]


def evaluate_pairs(pred_meshes: dict, gt_mesh: TriangleMesh, sample_count: int = 16384, seed: int = 0,
                   tau: float = DEFAULT_TAU, edge_angle: float = DEFAULT_EDGE_ANGLE,
                   expected_cc: Optional[int] = None) -> dict:
    """:func:`evaluate_pair` for several predictions against one reference.

    The reference is sampled once; every report equals the one
    :func:`evaluate_pair` would give for that prediction alone.
    """
    _check_tau(tau)
    used = np.unique(gt_mesh.faces)
    if len(used) == 0:
        raise DegenerateMesh("reference mesh has no faces")
    transform = unit_sphere_transform(gt_mesh.vertices[used])
    expected = gt_mesh.n_components() if expected_cc is None else int(expected_cc)
    pred_seed, gt_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(2, dtype=np.uint64))
    gt = transform.apply_mesh(gt_mesh)
    gv = gt.vertices[used]
    tau_abs = tau * float(np.linalg.norm(gv.max(axis=0) - gv.min(axis=0)))
    reference = None
    reports = {}
    for name, pred_mesh in pred_meshes.items():
        if pred_mesh.n_faces == 0 or not np.any(pred_mesh.face_areas() > 0):
            reports[name] = _empty_prediction_report(expected)
            continue
        if reference is None:
            gt_s = poisson_disk_sample(gt, sample_count, gt_seed)
            reference = (gt_s, detect_edges(gt_s, edge_angle))
        reports[name] = _report(transform.apply_mesh(pred_mesh), pred_mesh, gt, reference, sample_count, pred_seed,
                                tau, tau_abs, edge_angle, expected, transform.scale)
    return reports


def _report(pred: TriangleMesh, pred_mesh: TriangleMesh, gt: TriangleMesh, reference, sample_count: int,
            pred_seed: int, tau: float, tau_abs: float, edge_angle: float, expected: int, scale) -> MetricReport:
    gt_s, e_gt = reference
    pred_s = poisson_disk_sample(pred, sample_count, pred_seed)
    e_pred = detect_edges(pred_s, edge_angle)
    ecd, ef1 = edge_chamfer(pred_s, gt_s, edge_angle, tau_abs, edges=(e_pred, e_gt))
    observed = pred_mesh.n_components()
    _, edge_counts = pred_mesh.edges()

    norm = _meta(normalization="unit_sphere_of_reference", scale=repr(scale), samples=sample_count)
    values = {
        "cd": chamfer_distance(pred_s, gt_s),
        "hd": hausdorff_distance(pred_s, gt_s),
        "p2f": point_to_surface(pred_s, gt),
        "f1": f_score(pred_s, gt_s, tau_abs),
        "nc": normal_consistency(pred_s, gt_s),
        "ecd": ecd,
        "ef1": ef1,
        "alr": area_length_ratio(pred_mesh),
        "mr": manifoldness_rate(pred_mesh),
        "cc_diff": connected_component_diff(pred_mesh, max(expected, 1)),
    }
    edge_meta = _meta(tau=repr(tau_abs), edge_angle=edge_angle, edge_points_pred=len(e_pred),
                      edge_points_gt=len(e_gt))
    metadata = {
        "cd": norm,
        "hd": norm,
        "p2f": norm + ";surface=reference_mesh",
        "f1": _meta(tau_fraction=tau, tau=repr(tau_abs), reference="bbox_diagonal"),
        "nc": norm,
        "ecd": edge_meta,
        "ef1": edge_meta,
        "alr": _meta(formula=ALR_FORMULA, faces=pred_mesh.n_faces),
        "mr": _meta(edges=len(edge_counts)),
        "cc_diff": _meta(observed=observed, expected=expected),
    }
    return MetricReport(values, metadata)


def _empty_prediction_report(expected: int) -> MetricReport:
    """Worst-case values for a reconstruction with no surface at all."""
    values = {
        "cd": math.inf, "hd": math.inf, "p2f": math.inf, "f1": 0.0, "nc": 0.0,
        "ecd": math.inf, "ef1": 0.0, "alr": 0.0, "mr": 0.0,
        "cc_diff": max(expected, 1),
    }
    note = "empty_prediction=1"
    return MetricReport(values, {name: note for name in values})
