"""Scan geometry: source orbit, detector frames and Radon-plane bookkeeping.

Conventions fixed here and used by every other module:

* world frame: z up; the circular orbit lies in the z = 0 plane, runs
  counterclockwise, and the orbit parameter is the angle from the +x axis,
  so a(lam) = R (cos lam, sin lam, 0);
* detector frame at parameter lam:
      e_w = -(cos lam, sin lam, 0)    (unit vector source -> isocenter)
      e_u = (-sin lam, cos lam, 0)    (in-plane tangent)
      e_v = (0, 0, 1)
  a detector point with local coordinates (x, y) sits at
  a(lam) + x e_u + y e_v + D e_w;
* a line on the detector is  x cos(mu) + y sin(mu) = s  with mu in [0, pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .weights import WeightMap

# Sentinel returned by intersection_count when the plane contains the whole
# orbit (normal within 1e-6 of the rotation axis).
DEGENERATE = -1

_AXIS_TOL = 1e-6

# Global sign of the redundancy weight.  Fixed empirically once: with the
# discretization conventions of this package (central differences, standard
# line-integral orientation) this is the sign that makes reconstructions of
# positive phantoms come out with positive mean before rectification.
C_SIGN = -1.0


class GeometryError(ValueError):
    """Invalid or unsupported geometry."""


@dataclass(frozen=True, eq=False)
class OrbitGeometry:
    """Source trajectory a(lam) plus the distances that define the cone beam.

    kind is "circular" (positions derived from lam) or "tabulated"
    (positions given explicitly, one row per lam sample).
    """

    kind: str
    source_isocenter_distance: float
    source_detector_distance: float
    fov_radius: float
    lambdas: np.ndarray
    positions: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "lambdas", np.asarray(self.lambdas, dtype=float))
        if self.kind not in ("circular", "tabulated"):
            raise GeometryError(f"unknown orbit kind {self.kind!r}")
        R = self.source_isocenter_distance
        D = self.source_detector_distance
        B = self.fov_radius
        if not D > R > 0.0:
            raise GeometryError(
                "need source_detector_distance > source_isocenter_distance > 0"
            )
        if not 0.0 < B < R:
            raise GeometryError("field of view must lie strictly inside the orbit")
        lam = self.lambdas
        if lam.ndim != 1 or lam.size == 0:
            raise GeometryError("lambdas must be a non-empty 1-d array")
        if lam.size > 1 and not np.all(np.diff(lam) > 0):
            raise GeometryError("lambdas must be strictly increasing")
        if self.kind == "tabulated":
            if self.positions is None:
                raise GeometryError("tabulated orbit requires positions")
            pos = np.asarray(self.positions, dtype=float)
            if pos.shape != (lam.size, 3):
                raise GeometryError("positions must have shape (n_lambda, 3)")
            object.__setattr__(self, "positions", pos)

    @property
    def radius(self) -> float:
        return self.source_isocenter_distance

    @property
    def n_lambda(self) -> int:
        return int(self.lambdas.size)

    @property
    def detector_fov_radius(self) -> float:
        """Radius of the cone-beam projection of the FOV ball on the detector."""
        R = self.source_isocenter_distance
        B = self.fov_radius
        return self.source_detector_distance * B / math.sqrt(R * R - B * B)

    def is_full_circle(self, rtol: float = 1e-9) -> bool:
        """True for a uniform circular sampling of [0, 2*pi)."""
        if self.kind != "circular":
            return False
        lam = self.lambdas
        n = lam.size
        if n < 2:
            return False
        step = 2.0 * math.pi / n
        return bool(np.allclose(np.diff(lam), step, rtol=rtol, atol=1e-12))

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "source_isocenter_distance": self.source_isocenter_distance,
            "source_detector_distance": self.source_detector_distance,
            "fov_radius": self.fov_radius,
            "lambdas": self.lambdas.tolist(),
        }
        if self.positions is not None:
            d["positions"] = self.positions.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OrbitGeometry":
        pos = d.get("positions")
        return cls(
            kind=d["kind"],
            source_isocenter_distance=float(d["source_isocenter_distance"]),
            source_detector_distance=float(d["source_detector_distance"]),
            fov_radius=float(d["fov_radius"]),
            lambdas=np.asarray(d["lambdas"], dtype=float),
            positions=None if pos is None else np.asarray(pos, dtype=float),
        )


def circular_orbit(
    n_projections: int,
    source_isocenter_distance: float,
    source_detector_distance: float,
    fov_radius: float,
) -> OrbitGeometry:
    """Full-scan circular orbit, uniform on [0, 2*pi)."""
    if n_projections < 1:
        raise GeometryError("need at least one projection")
    lam = 2.0 * math.pi * np.arange(n_projections) / n_projections
    return OrbitGeometry(
        kind="circular",
        source_isocenter_distance=source_isocenter_distance,
        source_detector_distance=source_detector_distance,
        fov_radius=fov_radius,
        lambdas=lam,
    )


@dataclass(frozen=True, eq=False)
class DetectorGrid:
    """Flat detector sampling; coordinates are measured from the principal point.

    spacing and offset are (row, col) pairs in mm; offset places the principal
    point relative to the detector center.
    """

    n_rows: int
    n_cols: int
    spacing: tuple[float, float]
    offset: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.n_rows < 1 or self.n_cols < 1:
            raise GeometryError("detector needs at least one pixel per axis")
        if self.spacing[0] <= 0 or self.spacing[1] <= 0:
            raise GeometryError("detector spacing must be positive")
        if abs(self.offset[0]) >= 0.5 * self.n_rows * self.spacing[0] or abs(
            self.offset[1]
        ) >= 0.5 * self.n_cols * self.spacing[1]:
            raise GeometryError("principal point must lie inside the detector")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    def x_values(self) -> np.ndarray:
        j = np.arange(self.n_cols)
        return (j - 0.5 * (self.n_cols - 1)) * self.spacing[1] - self.offset[1]

    def y_values(self) -> np.ndarray:
        i = np.arange(self.n_rows)
        return (i - 0.5 * (self.n_rows - 1)) * self.spacing[0] - self.offset[0]

    @property
    def half_diagonal(self) -> float:
        return 0.5 * math.hypot(
            self.n_rows * self.spacing[0], self.n_cols * self.spacing[1]
        )

    def covers_radius(self, r: float) -> bool:
        """Whether the centered disk of radius r fits on the detector."""
        half_h = 0.5 * self.n_rows * self.spacing[0] - abs(self.offset[0])
        half_w = 0.5 * self.n_cols * self.spacing[1] - abs(self.offset[1])
        return min(half_h, half_w) >= r * (1.0 - 1e-12)

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "spacing": list(self.spacing),
            "offset": list(self.offset),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorGrid":
        return cls(
            n_rows=int(d["n_rows"]),
            n_cols=int(d["n_cols"]),
            spacing=tuple(float(v) for v in d["spacing"]),
            offset=tuple(float(v) for v in d.get("offset", (0.0, 0.0))),
        )


@dataclass(frozen=True, eq=False)
class LineGrid:
    """Sampling of detector lines: radial coordinate s and angle mu in [0, pi)."""

    n_s: int
    s_spacing: float
    n_mu: int

    def __post_init__(self):
        if self.n_s < 3:
            raise GeometryError("need at least 3 radial samples")
        if self.n_mu < 1:
            raise GeometryError("need at least one line angle")
        if self.s_spacing <= 0:
            raise GeometryError("s spacing must be positive")

    @property
    def mu_spacing(self) -> float:
        return math.pi / self.n_mu

    @property
    def s_max(self) -> float:
        return 0.5 * (self.n_s - 1) * self.s_spacing

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_mu, self.n_s)

    def s_values(self) -> np.ndarray:
        k = np.arange(self.n_s)
        return (k - 0.5 * (self.n_s - 1)) * self.s_spacing

    def mu_values(self) -> np.ndarray:
        return np.arange(self.n_mu) * self.mu_spacing

    def to_dict(self) -> dict:
        return {"n_s": self.n_s, "s_spacing": self.s_spacing, "n_mu": self.n_mu}

    @classmethod
    def from_dict(cls, d: dict) -> "LineGrid":
        return cls(n_s=int(d["n_s"]), s_spacing=float(d["s_spacing"]), n_mu=int(d["n_mu"]))


@dataclass(frozen=True, eq=False)
class VolumeGrid:
    """Regular voxel grid; origin is the world position of voxel (0,0,0) center.

    Volumes are stored as (nz, ny, nx) C-order arrays.
    """

    nx: int
    ny: int
    nz: int
    spacing: float
    origin: tuple[float, float, float] | None = None

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise GeometryError("volume needs at least one voxel per axis")
        if self.spacing <= 0:
            raise GeometryError("voxel spacing must be positive")
        if self.origin is None:
            org = tuple(
                -0.5 * (n - 1) * self.spacing for n in (self.nx, self.ny, self.nz)
            )
            object.__setattr__(self, "origin", org)
        else:
            object.__setattr__(
                self, "origin", tuple(float(v) for v in self.origin)
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nz, self.ny, self.nx)

    @property
    def n_voxels(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def voxel_volume(self) -> float:
        return self.spacing ** 3

    @property
    def ball_radius(self) -> float:
        """Radius of the largest centered ball covered by the grid extent."""
        return 0.5 * min(self.nx, self.ny, self.nz) * self.spacing

    def x_values(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.nx) * self.spacing

    def y_values(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.ny) * self.spacing

    def z_values(self) -> np.ndarray:
        return self.origin[2] + np.arange(self.nz) * self.spacing

    def to_dict(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "nz": self.nz,
            "spacing": self.spacing,
            "origin": list(self.origin),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VolumeGrid":
        origin = d.get("origin")
        return cls(
            nx=int(d["nx"]),
            ny=int(d["ny"]),
            nz=int(d["nz"]),
            spacing=float(d["spacing"]),
            origin=None if origin is None else tuple(float(v) for v in origin),
        )


def source_position(geom: OrbitGeometry, lam: float) -> np.ndarray:
    """World position a(lam) of the source."""
    if geom.kind == "circular":
        R = geom.source_isocenter_distance
        return np.array([R * math.cos(lam), R * math.sin(lam), 0.0])
    lams = geom.lambdas
    if lam < lams[0] or lam > lams[-1]:
        raise GeometryError(
            f"lambda {lam} outside tabulated range [{lams[0]}, {lams[-1]}]"
        )
    pos = geom.positions
    return np.array([np.interp(lam, lams, pos[:, k]) for k in range(3)])


def detector_frame(geom: OrbitGeometry, lam: float):
    """Orthonormal detector frame (e_u, e_v, e_w) at orbit parameter lam."""
    if geom.kind == "circular":
        c, s = math.cos(lam), math.sin(lam)
        e_u = np.array([-s, c, 0.0])
        e_v = np.array([0.0, 0.0, 1.0])
        e_w = np.array([-c, -s, 0.0])
        return e_u, e_v, e_w
    a = source_position(geom, lam)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise GeometryError("source position at the isocenter")
    a_hat = a / norm
    if math.hypot(a_hat[0], a_hat[1]) < _AXIS_TOL:
        raise GeometryError("source on the rotation axis: detector frame undefined")
    e_u = np.array([-a_hat[1], a_hat[0], 0.0])
    e_u /= np.linalg.norm(e_u)
    e_w = -a_hat
    e_v = np.cross(e_u, e_w)
    return e_u, e_v, e_w


def orbit_frames(geom: OrbitGeometry):
    """Source positions and detector frames for all lam, as (n,3) arrays."""
    n = geom.n_lambda
    srcs = np.empty((n, 3))
    eus = np.empty((n, 3))
    evs = np.empty((n, 3))
    ews = np.empty((n, 3))
    for i, lam in enumerate(geom.lambdas):
        srcs[i] = source_position(geom, lam)
        eus[i], evs[i], ews[i] = detector_frame(geom, lam)
    return srcs, eus, evs, ews


def lambda_weights(geom: OrbitGeometry) -> np.ndarray:
    """Quadrature weights for integrals over the orbit parameter."""
    lam = geom.lambdas
    n = lam.size
    if geom.is_full_circle():
        return np.full(n, 2.0 * math.pi / n)
    if n == 1:
        return np.array([1.0])
    w = np.empty(n)
    w[0] = 0.5 * (lam[1] - lam[0])
    w[-1] = 0.5 * (lam[-1] - lam[-2])
    if n > 2:
        w[1:-1] = 0.5 * (lam[2:] - lam[:-2])
    return w


def plane_normal(geom: OrbitGeometry, lam: float, s: float, mu: float) -> np.ndarray:
    """Unit normal of the plane through a(lam) and the detector line (s, mu)."""
    e_u, e_v, e_w = detector_frame(geom, lam)
    D = geom.source_detector_distance
    theta = D * math.cos(mu) * e_u + D * math.sin(mu) * e_v - s * e_w
    return theta / math.sqrt(s * s + D * D)


def intersection_count(geom: OrbitGeometry, theta: np.ndarray, lam: float):
    """Number of orbit/plane intersections for the plane through a(lam).

    Returns DEGENERATE when the plane contains the whole circle.
    """
    if geom.kind != "circular":
        raise GeometryError("intersection counting is only defined for circular orbits")
    theta = np.asarray(theta, dtype=float)
    theta = theta / np.linalg.norm(theta)
    txy = math.hypot(theta[0], theta[1])
    if txy < _AXIS_TOL:
        return DEGENERATE
    R = geom.source_isocenter_distance
    ell = float(source_position(geom, lam) @ theta)
    amp = R * txy
    # A cos(phi - phi0) = ell has 2, 1 or 0 roots on the circle.
    ratio = abs(ell) / amp
    if ratio > 1.0 + 1e-9:
        return 0
    if ratio > 1.0 - 1e-9:
        return 1
    return 2


def analytic_redundancy_map(geom: OrbitGeometry, grid: LineGrid) -> WeightMap:
    """Closed-form redundancy weight for a full circular scan.

    w(s, mu) = C_SIGN * R * D * |cos mu| / (8 pi^2 (s^2 + D^2)); the radial
    1/sqrt(s^2 + D^2) factor of the filtering step is folded in so that the
    map can be compared directly against trained ones.
    """
    if geom.kind != "circular" or not geom.is_full_circle():
        raise GeometryError(
            "analytic redundancy weights are only available for full circular scans"
        )
    R = geom.source_isocenter_distance
    D = geom.source_detector_distance
    s = grid.s_values()
    mu = grid.mu_values()
    w = (
        C_SIGN
        * R
        * D
        * np.abs(np.cos(mu))[:, None]
        / (8.0 * math.pi ** 2 * (s * s + D * D)[None, :])
    )
    return WeightMap(w, domain="line", trainable=False)
