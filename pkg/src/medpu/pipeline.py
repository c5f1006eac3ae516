"""Stage orchestration: configuration, surface reconstruction and the
mask-to-report pipeline with its run manifest."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import InvalidArgument, InvalidVoxelSize
from .geometry import PointCloud, TriangleMesh, normalize_to_unit_sphere
from .io import load_mesh, save_cloud, save_mesh
from .marching_cubes import marching_cubes
from .metrics import evaluate_pairs, write_report_csv
from .sampling import farthest_point_sample, poisson_disk_sample
from .upsample import UpsampleConfig, upsample
from .voxel import (
    DEFAULT_MAX_CELLS,
    fill_enclosed,
    largest_components,
    load_mask,
    mask_to_surface_points,
    occupancy_to_scalar,
    points_to_occupancy,
)

logger = logging.getLogger(__name__)

SUPPORTED_RATIOS = (2, 4, 16)


@dataclass
class PipelineConfig:
    voxel_size: float = 1.5
    ratio: int = 16
    input_points: int = 65536
    sample_count: int = 16384
    seed: int = 0
    refine_mode: str = "mls"
    tau: float = 0.01
    edge_angle: float = 30.0
    expected_cc: int = 0
    smoothing_radius: int = 1
    iso: float = 0.5
    fill_interior: bool = True
    keep_components: int = 0
    max_cells: int = DEFAULT_MAX_CELLS
    mls_k: int = 16
    mls_iterations: int = 3
    mls_degree: int = 2
    chamfer_steps: int = 50
    chamfer_step_size: float = 0.1
    baseline: bool = False

    def validate(self) -> "PipelineConfig":
        if not self.voxel_size > 0:
            raise InvalidVoxelSize(f"voxel size must be positive, got {self.voxel_size}")
        if self.ratio not in SUPPORTED_RATIOS:
            raise InvalidArgument(f"ratio must be one of {SUPPORTED_RATIOS}, got {self.ratio}")
        if self.input_points < 4:
            raise InvalidArgument("input_points must be at least 4")
        if self.sample_count < 1:
            raise InvalidArgument("sample_count must be positive")
        if not self.tau > 0:
            raise InvalidArgument("tau must be positive")
        if not 0 <= self.edge_angle <= 90:
            raise InvalidArgument("edge_angle must lie in [0, 90]")
        if self.expected_cc < 0 or self.keep_components < 0 or self.smoothing_radius < 0:
            raise InvalidArgument("counts must be non-negative")
        self.upsample_config()
        return self

    def upsample_config(self) -> UpsampleConfig:
        return UpsampleConfig(
            ratio=self.ratio,
            mls_k=self.mls_k,
            mls_iterations=self.mls_iterations,
            mls_degree=self.mls_degree,
            refine_mode=self.refine_mode,
            chamfer_steps=self.chamfer_steps,
            chamfer_step_size=self.chamfer_step_size,
        )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(kind, raw: str):
    if kind in (bool, "bool"):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InvalidArgument(f"not a boolean: {raw!r}")
    if kind in (int, "int"):
        return int(raw)
    if kind in (float, "float"):
        return float(raw)
    return raw.strip()


def parse_config_text(text: str) -> dict:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name: f.type for f in fields(PipelineConfig)}
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise InvalidArgument(f"config line {lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(known[key], value)
        except ValueError:
            raise InvalidArgument(f"config line {lineno}: bad value for {key}: {value!r}") from None
    if out.get("refine_mode") == "chamfer-oracle":
        out["refine_mode"] = "chamfer_oracle"
    return out


def load_config(path: Optional[str], overrides: Optional[dict] = None) -> PipelineConfig:
    """Defaults, then the config file, then explicit overrides."""
    values = {}
    if path:
        values.update(parse_config_text(Path(path).read_text()))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    try:
        config = PipelineConfig(**values)
    except TypeError as exc:
        raise InvalidArgument(str(exc)) from None
    return config.validate()


def reconstruct_surface(cloud: PointCloud, voxel_size: float = 1.5, smoothing_radius: int = 1, iso: float = 0.5,
                        fill_interior: bool = True, keep_components: int = 0,
                        max_cells: int = DEFAULT_MAX_CELLS) -> TriangleMesh:
    """Voxelize, optionally fill enclosed space, smooth, and run marching cubes."""
    mask = points_to_occupancy(cloud, voxel_size, max_cells)
    if fill_interior:
        mask = fill_enclosed(mask)
    mesh = marching_cubes(occupancy_to_scalar(mask, smoothing_radius), iso)
    if keep_components > 0:
        mesh = largest_components(mesh, keep_components)
    return mesh


def cap_points(cloud: PointCloud, limit: int, seed: int) -> PointCloud:
    if len(cloud) <= limit:
        return cloud
    return farthest_point_sample(cloud, limit, seed)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    inputs: dict
    outputs: dict
    stage_seconds: dict
    tool_version: str = __version__

    def write(self, path) -> None:
        payload = dataclasses.asdict(self)
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


class _Timer:
    def __init__(self):
        self.seconds = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.seconds[name] = round(time.perf_counter() - self.t, 6)

        return _Ctx()


def upsample_cloud(cloud: PointCloud, config: PipelineConfig, reference: Optional[PointCloud] = None) -> PointCloud:
    capped = cap_points(cloud, config.input_points, config.seed)
    return upsample(capped, config.upsample_config(), reference).dense


def reconstruct_with(cloud: PointCloud, config: PipelineConfig) -> TriangleMesh:
    return reconstruct_surface(cloud, config.voxel_size, config.smoothing_radius, config.iso,
                               config.fill_interior, config.keep_components, config.max_cells)


def run_pipeline(mask_path, gt_path, out_dir, config: PipelineConfig) -> dict:
    """Extract, normalize, upsample, reconstruct and evaluate one case.

    Writes ``extracted.xyz``, ``normalized.xyz``, ``upsampled.xyz``,
    ``mesh.obj``, ``report.csv`` and ``manifest.json`` into ``out_dir``
    (plus ``raw_mesh.obj`` when ``config.baseline`` is set) and returns the
    metric reports keyed by case name.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    timer = _Timer()
    with timer("load"):
        mask = load_mask(mask_path)
        gt_mesh = load_mesh(gt_path)
    with timer("extract"):
        extracted = mask_to_surface_points(mask)
        save_cloud(extracted, out / "extracted.xyz")
    with timer("normalize"):
        capped = cap_points(extracted, config.input_points, config.seed)
        normalized, transform = normalize_to_unit_sphere(capped)
        save_cloud(normalized, out / "normalized.xyz")
    with timer("upsample"):
        reference = None
        if config.refine_mode == "chamfer_oracle":
            n_ref = min(len(capped) * config.ratio, 65536)
            reference = transform.apply_cloud(
                PointCloud(poisson_disk_sample(gt_mesh, n_ref, config.seed).points)
            )
        dense_n = upsample(normalized, config.upsample_config(), reference).dense
        dense = transform.invert_cloud(dense_n)
        save_cloud(dense, out / "upsampled.xyz")
    with timer("reconstruct"):
        mesh = reconstruct_with(dense, config)
        save_mesh(mesh, out / "mesh.obj")
    expected = config.expected_cc or None
    meshes = {"pipeline": mesh}
    if config.baseline:
        with timer("baseline"):
            raw_mesh = reconstruct_with(extracted, config)
            save_mesh(raw_mesh, out / "raw_mesh.obj")
        meshes["raw"] = raw_mesh
    with timer("evaluate"):
        reports = evaluate_pairs(meshes, gt_mesh, config.sample_count, config.seed, config.tau, config.edge_angle,
                                 expected)
    write_report_csv(out / "report.csv", reports)

    outputs = {}
    for name in ("extracted.xyz", "normalized.xyz", "upsampled.xyz", "mesh.obj", "raw_mesh.obj", "report.csv"):
        if (out / name).exists():
            outputs[name] = file_digest(out / name)
    manifest = RunManifest(
        config=config.as_dict(),
        inputs={"mask": file_digest(mask_path), "gt_mesh": file_digest(gt_path)},
        outputs=outputs,
        stage_seconds=timer.seconds,
    )
    manifest.write(out / "manifest.json")
    return reports


def mesh_summary(mesh: TriangleMesh) -> dict:
    _, counts = mesh.edges()
    return {
        "vertices": int(len(mesh.vertices)),
        "faces": int(mesh.n_faces),
        "components": mesh.n_components(),
        "boundary_edges": int(np.count_nonzero(counts == 1)),
    }
