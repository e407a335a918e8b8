"""Fixed and trainable weighting layers of the reconstruction chain.

Three of the maps are pure functions of the scan geometry (cosine weight on
the detector, the radial sinogram weight, and the detector-domain weight used
after line backprojection).  The redundancy weight is the single map that may
be trained; it lives on the line grid and is shared across all projections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .geometry import DetectorGrid, LineGrid


@dataclass
class WeightMap:
    """A 2D weight array plus what it multiplies.

    domain is "line" for (mu, s) maps and "detector" for (row, col) maps.
    """

    values: np.ndarray
    domain: str
    trainable: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("weight map must be 2-dimensional")
        if self.domain not in ("line", "detector"):
            raise ValueError(f"unknown weight domain {self.domain!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("weight map contains non-finite values")

    @property
    def shape(self):
        return self.values.shape


def cosine_weight(det: "DetectorGrid", sdd: float) -> WeightMap:
    """D / sqrt(x^2 + y^2 + D^2) on the detector grid."""
    if sdd <= 0:
        raise ValueError("source-detector distance must be positive")
    x = det.x_values()
    y = det.y_values()
    w = sdd / np.sqrt(x[None, :] ** 2 + y[:, None] ** 2 + sdd * sdd)
    return WeightMap(w, domain="detector")


def sinogram_weight(lines: "LineGrid", sdd: float) -> WeightMap:
    """(s^2 + D^2) / D^2 on the line grid, independent of the angle."""
    s = lines.s_values()
    row = (s * s + sdd * sdd) / (sdd * sdd)
    w = np.broadcast_to(row, (lines.n_mu, lines.n_s)).copy()
    return WeightMap(w, domain="line")


def detector_weight(det: "DetectorGrid", sdd: float) -> WeightMap:
    """x^2 + y^2 + D^2 on the detector grid."""
    x = det.x_values()
    y = det.y_values()
    w = x[None, :] ** 2 + y[:, None] ** 2 + sdd * sdd
    return WeightMap(w, domain="detector")


def apply_weight(data: np.ndarray, wmap: WeightMap | np.ndarray) -> np.ndarray:
    """Elementwise product; broadcasts one 2D map over a stack of frames."""
    w = wmap.values if isinstance(wmap, WeightMap) else np.asarray(wmap)
    data = np.asarray(data)
    if data.shape[-2:] != w.shape:
        raise ValueError(
            f"weight map shape {w.shape} does not match data frames {data.shape[-2:]}"
        )
    return data * w


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(4.0 * sigma)))
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(wmap: WeightMap, sigma: float) -> WeightMap:
    """Separable Gaussian blur of a line-domain map.

    Padding respects the line parametrization: symmetric reflection along s,
    and wrap-around along mu with the antipodal identification
    (s, mu + pi) == (-s, mu), so the seam at mu = 0 / mu = pi is seamless.
    """
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if wmap.domain != "line":
        raise ValueError("gaussian_smooth expects a line-domain map")
    if sigma == 0:
        return WeightMap(wmap.values.copy(), domain="line", trainable=wmap.trainable)

    v = wmap.values
    n_mu, n_s = v.shape
    kern = _gaussian_kernel(sigma)
    pad = len(kern) // 2
    if pad >= n_mu:
        raise ValueError("sigma too large for the angular extent of the map")

    # mu axis: rows above 0 come from the top of the map with s reversed,
    # rows past pi from the bottom, likewise reversed.
    top = v[n_mu - pad:, ::-1]
    bottom = v[:pad, ::-1]
    padded = np.concatenate([top, v, bottom], axis=0)
    # s axis: half-sample symmetric reflection (conserves total mass).
    padded = np.pad(padded, ((0, 0), (pad, pad)), mode="symmetric")

    out = np.empty_like(padded[pad:-pad] if pad else padded)
    tmp = np.empty((n_mu, padded.shape[1]))
    for j in range(padded.shape[1]):
        tmp[:, j] = np.convolve(padded[:, j], kern, mode="valid")
    out = np.empty((n_mu, n_s))
    for i in range(n_mu):
        out[i] = np.convolve(tmp[i], kern, mode="valid")
    return WeightMap(out, domain="line", trainable=wmap.trainable)
