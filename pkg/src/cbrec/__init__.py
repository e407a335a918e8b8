"""Cone-beam CT reconstruction with a learnable shift-variant filter.

The reconstruction is a chain of explicit linear operators; the only
trainable piece is the orbit-dependent redundancy weight map, fitted by
exact adjoint gradients against simulated phantoms.  An FDK baseline and a
small CLI round out the toolkit.
"""

__version__ = "0.1.0"

from .geometry import (
    DEGENERATE,
    DetectorGrid,
    GeometryError,
    LineGrid,
    OrbitGeometry,
    VolumeGrid,
    analytic_redundancy_map,
    circular_orbit,
    detector_frame,
    intersection_count,
    plane_normal,
    source_position,
)
from .pipeline import PipelineConfig, PipelineError, reconstruct
from .weights import WeightMap

__all__ = [
    "DEGENERATE",
    "DetectorGrid",
    "GeometryError",
    "LineGrid",
    "OrbitGeometry",
    "PipelineConfig",
    "PipelineError",
    "VolumeGrid",
    "WeightMap",
    "analytic_redundancy_map",
    "circular_orbit",
    "detector_frame",
    "intersection_count",
    "plane_normal",
    "reconstruct",
    "source_position",
]
