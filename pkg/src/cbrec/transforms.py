"""Matched linear operator pairs.

Forward operators carry explicit quadrature factors (ray step, s/mu bin
sizes, orbit parameter step, voxel volume) so that discrete inner products
approximate the continuous ones.  Each adjoint is the exact transpose of its
partner under those weighted inner products: the dot-product identity
< A x, y > = < x, A^T y > holds to floating-point accuracy, which the
training code relies on for exact gradients.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .geometry import (
    DetectorGrid,
    LineGrid,
    OrbitGeometry,
    VolumeGrid,
    lambda_weights,
    orbit_frames,
)


def _ray_sampling(det: DetectorGrid) -> tuple[float, int]:
    """Integration range and step count for line integrals over a detector image."""
    t_max = det.half_diagonal
    step = 0.5 * min(det.spacing)
    n_t = int(np.ceil(2.0 * t_max / step))
    return t_max, n_t


def radon2d(img: np.ndarray, det: DetectorGrid, lines: LineGrid) -> np.ndarray:
    """Parallel-beam line integrals of a detector image, sampled on the line grid."""
    img = np.ascontiguousarray(img, dtype=np.float64)
    if img.shape != det.shape:
        raise ValueError(f"image shape {img.shape} does not match detector {det.shape}")
    t_max, n_t = _ray_sampling(det)
    return kernels.radon2d_forward(
        img,
        det.spacing[0],
        det.spacing[1],
        det.offset[0],
        det.offset[1],
        lines.n_s,
        lines.s_spacing,
        lines.n_mu,
        t_max,
        n_t,
    )


def radon2d_adjoint(sino: np.ndarray, lines: LineGrid, det: DetectorGrid) -> np.ndarray:
    """Exact adjoint of radon2d; approximates backprojection over mu in [0, pi)."""
    sino = np.ascontiguousarray(sino, dtype=np.float64)
    if sino.shape != lines.shape:
        raise ValueError(f"sinogram shape {sino.shape} does not match grid {lines.shape}")
    t_max, n_t = _ray_sampling(det)
    scale = lines.s_spacing * lines.mu_spacing / (det.spacing[0] * det.spacing[1])
    return kernels.radon2d_adjoint(
        sino,
        det.n_rows,
        det.n_cols,
        det.spacing[0],
        det.spacing[1],
        det.offset[0],
        det.offset[1],
        lines.s_spacing,
        t_max,
        n_t,
        scale,
    )


def diff_s(sino: np.ndarray, s_spacing: float) -> np.ndarray:
    """d/ds along the last axis: central differences, one-sided at the ends."""
    sino = np.asarray(sino, dtype=np.float64)
    if sino.shape[-1] < 3:
        raise ValueError("need at least 3 radial samples to differentiate")
    out = np.empty_like(sino)
    out[..., 1:-1] = (sino[..., 2:] - sino[..., :-2]) / (2.0 * s_spacing)
    out[..., 0] = (sino[..., 1] - sino[..., 0]) / s_spacing
    out[..., -1] = (sino[..., -1] - sino[..., -2]) / s_spacing
    return out


def diff_s_adjoint(sino: np.ndarray, s_spacing: float) -> np.ndarray:
    """Transpose of the diff_s matrix (same s spacing, same boundary scheme)."""
    y = np.asarray(sino, dtype=np.float64)
    n = y.shape[-1]
    if n < 3:
        raise ValueError("need at least 3 radial samples to differentiate")
    out = np.zeros_like(y)
    h = s_spacing
    h2 = 2.0 * h
    out[..., 0] = -y[..., 0] / h - y[..., 1] / h2
    if n == 3:
        out[..., 1] = (y[..., 0] - y[..., 2]) / h
    else:
        out[..., 1] = y[..., 0] / h - y[..., 2] / h2
        out[..., n - 2] = y[..., n - 3] / h2 - y[..., n - 1] / h
        if n > 4:
            out[..., 2:-2] = (y[..., 1:-3] - y[..., 3:-1]) / h2
    out[..., -1] = y[..., -2] / h2 + y[..., -1] / h
    return out


def conebeam_forward(
    vol: np.ndarray, geom: OrbitGeometry, grid: VolumeGrid, det: DetectorGrid
) -> np.ndarray:
    """Cone-beam line integrals from a(lam) through every detector pixel."""
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    if vol.shape != grid.shape:
        raise ValueError(f"volume shape {vol.shape} does not match grid {grid.shape}")
    srcs, eus, evs, ews = orbit_frames(geom)
    step = 0.5 * grid.spacing
    return kernels.cone_forward(
        vol,
        grid.spacing,
        grid.origin[0],
        grid.origin[1],
        grid.origin[2],
        srcs,
        eus,
        evs,
        ews,
        geom.source_detector_distance,
        det.n_rows,
        det.n_cols,
        det.spacing[0],
        det.spacing[1],
        det.offset[0],
        det.offset[1],
        step,
    )


def conebeam_backproject(
    stack: np.ndarray,
    geom: OrbitGeometry,
    det: DetectorGrid,
    grid: VolumeGrid,
    out: np.ndarray | None = None,
    lam_indices: np.ndarray | None = None,
) -> np.ndarray:
    """Distance-squared weighted cone-beam backprojection with dlam quadrature.

    Pass lam_indices to accumulate a subset of projections (streaming use);
    out, when given, is accumulated into and returned.
    """
    stack = np.ascontiguousarray(stack, dtype=np.float64)
    if out is None:
        out = np.zeros(grid.shape)
    srcs, eus, evs, ews = orbit_frames(geom)
    dlam = lambda_weights(geom)
    if lam_indices is not None:
        idx = np.asarray(lam_indices)
        srcs, eus, evs, ews, dlam = (
            srcs[idx], eus[idx], evs[idx], ews[idx], dlam[idx],
        )
    if stack.shape != (srcs.shape[0], det.n_rows, det.n_cols):
        raise ValueError("projection stack does not match geometry and detector")
    kernels.cone_backproject_accum(
        out,
        stack,
        grid.spacing,
        grid.origin[0],
        grid.origin[1],
        grid.origin[2],
        srcs,
        eus,
        evs,
        ews,
        geom.source_detector_distance,
        det.spacing[0],
        det.spacing[1],
        det.offset[0],
        det.offset[1],
        dlam,
        0,
        geom.source_isocenter_distance,
    )
    return out


def conebeam_backproject_adjoint(
    vol: np.ndarray, geom: OrbitGeometry, grid: VolumeGrid, det: DetectorGrid
) -> np.ndarray:
    """Exact transpose of conebeam_backproject (voxel-driven splat).

    Note this is deliberately not conebeam_forward: the ray-driven projector
    and the pixel-driven backprojector are different discretizations, and the
    gradient chain needs the true transpose.
    """
    vol = np.ascontiguousarray(vol, dtype=np.float64)
    if vol.shape != grid.shape:
        raise ValueError(f"volume shape {vol.shape} does not match grid {grid.shape}")
    srcs, eus, evs, ews = orbit_frames(geom)
    factor = grid.voxel_volume / (det.spacing[0] * det.spacing[1])
    return kernels.cone_backproject_adjoint(
        vol,
        grid.spacing,
        grid.origin[0],
        grid.origin[1],
        grid.origin[2],
        srcs,
        eus,
        evs,
        ews,
        geom.source_detector_distance,
        det.n_rows,
        det.n_cols,
        det.spacing[0],
        det.spacing[1],
        det.offset[0],
        det.offset[1],
        factor,
    )
