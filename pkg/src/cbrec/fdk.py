"""Feldkamp-type filtered backprojection baseline for circular full scans.

Cosine-weight each projection, ramp-filter every detector row, then
backproject with the standard source-distance weighting.  Used as the
reference reconstruction the shift-variant pipeline is compared against.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .geometry import (
    DetectorGrid,
    GeometryError,
    OrbitGeometry,
    VolumeGrid,
    lambda_weights,
    orbit_frames,
)
from .weights import cosine_weight


def ramp_kernel(n_taps: int, spacing: float) -> np.ndarray:
    """Band-limited ramp kernel values at offsets -(n-1) .. (n-1)."""
    k = np.arange(-(n_taps - 1), n_taps)
    h = np.zeros(k.shape)
    h[k == 0] = 1.0 / (4.0 * spacing * spacing)
    odd = k % 2 != 0
    h[odd] = -1.0 / (np.pi * k[odd] * spacing) ** 2
    return h


def _ramp_filter(rows: np.ndarray, spacing: float) -> np.ndarray:
    """Apply |omega| filtering along the last axis (band-limited ramp).

    Rows are padded by edge replication before the FFT, so a constant row is
    seen as constant (pure DC, filtered to zero) rather than as a box with
    edge transients.  For projections that vanish at the detector border this
    coincides with zero padding.
    """
    n = rows.shape[-1]
    if n < 2:
        raise ValueError("need at least 2 samples to ramp-filter")
    size = 1
    while size < 2 * n:
        size *= 2
    right = (size - n + 1) // 2
    left = size - n - right
    buf = np.concatenate(
        [
            rows,
            np.repeat(rows[..., -1:], right, axis=-1),
            np.repeat(rows[..., :1], left, axis=-1),
        ],
        axis=-1,
    )
    freqs = np.abs(np.fft.rfftfreq(size, d=spacing))
    spec = np.fft.rfft(buf, axis=-1) * freqs
    return np.fft.irfft(spec, size, axis=-1)[..., :n]


def ramp_filter_row(row: np.ndarray, spacing: float) -> np.ndarray:
    """Ramp-filter a single detector row."""
    return _ramp_filter(np.asarray(row, dtype=np.float64), spacing)


def fdk_reconstruct(
    p: np.ndarray, geom: OrbitGeometry, det: DetectorGrid, grid: VolumeGrid
) -> np.ndarray:
    """FDK reconstruction of a circular full-scan projection stack."""
    if geom.kind != "circular" or not geom.is_full_circle():
        raise GeometryError("FDK requires a uniform full circular scan")
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (geom.n_lambda, det.n_rows, det.n_cols):
        raise ValueError("projection stack does not match geometry and detector")
    cw = cosine_weight(det, geom.source_detector_distance).values
    filtered = _ramp_filter(p * cw, det.spacing[1])
    filtered = np.ascontiguousarray(filtered)
    srcs, eus, evs, ews = orbit_frames(geom)
    out = np.zeros(grid.shape)
    kernels.cone_backproject_accum(
        out,
        filtered,
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
        lambda_weights(geom),
        1,
        geom.source_isocenter_distance,
    )
    return out
