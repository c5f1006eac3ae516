"""Segmentation-mask to mesh reconstruction through point cloud upsampling,
with point-set and mesh-quality evaluation."""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    AABB,
    NormalizationTransform,
    PointCloud,
    TriangleMesh,
    bounding_box,
    face_normal,
    normalize_to_unit_sphere,
)
from .spatial import SpatialIndex  # noqa: E402

__all__ = [
    "AABB",
    "NormalizationTransform",
    "PointCloud",
    "SpatialIndex",
    "TriangleMesh",
    "bounding_box",
    "face_normal",
    "normalize_to_unit_sphere",
]
