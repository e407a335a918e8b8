"""Random analytic scenes and their voxelizations.

Scenes are built from four primitive types (sphere, ellipsoid, box,
cylinder) with random sizes, rotations and densities, always placed so the
whole object stays inside the ball of radius B.  Rasterization is plain
voxel-center point sampling; overlapping objects add.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import OrbitGeometry, VolumeGrid

SHAPES = ("sphere", "ellipsoid", "box", "cylinder")

# Uniform sampling ranges, as fractions of the FOV radius B.  The upper size
# bound is generous on purpose: scenes should put object mass near the FOV
# boundary too, otherwise the nearly-tangent Radon planes carry no signal.
_SIZE_LO, _SIZE_HI = 0.10, 0.35
_DENSITY_LO, _DENSITY_HI = 0.2, 1.0
_MIN_OBJECTS, _MAX_OBJECTS = 5, 10


@dataclass
class Primitive:
    """One solid; size is interpreted per shape.

    sphere:    size = (r, r, r)
    ellipsoid: size = half-axes (a, b, c)
    box:       size = half-extents
    cylinder:  size = (r, r, half_height), axis along local z
    """

    shape: str
    center: np.ndarray
    size: np.ndarray
    rotation: np.ndarray
    density: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.size = np.asarray(self.size, dtype=float)
        self.rotation = np.asarray(self.rotation, dtype=float)
        if self.shape not in SHAPES:
            raise ValueError(f"unknown primitive shape {self.shape!r}")
        if self.rotation.shape != (3, 3):
            raise ValueError("rotation must be a 3x3 matrix")

    @property
    def circumradius(self) -> float:
        if self.shape == "sphere":
            return float(self.size[0])
        if self.shape == "ellipsoid":
            return float(self.size.max())
        if self.shape == "box":
            return float(np.linalg.norm(self.size))
        return float(math.hypot(self.size[0], self.size[2]))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask for world points (n, 3) inside the solid."""
        q = (points - self.center) @ self.rotation  # = R^T (p - c) per row
        if self.shape == "sphere":
            return (q * q).sum(axis=-1) <= self.size[0] ** 2
        if self.shape == "ellipsoid":
            return ((q / self.size) ** 2).sum(axis=-1) <= 1.0
        if self.shape == "box":
            return (np.abs(q) <= self.size).all(axis=-1)
        r2 = q[..., 0] ** 2 + q[..., 1] ** 2
        return (r2 <= self.size[0] ** 2) & (np.abs(q[..., 2]) <= self.size[2])


@dataclass
class Scene:
    objects: list[Primitive] = field(default_factory=list)
    fov_radius: float = 0.0

    def to_dict(self) -> dict:
        return {
            "fov_radius": self.fov_radius,
            "objects": [
                {
                    "shape": o.shape,
                    "center": o.center.tolist(),
                    "size": o.size.tolist(),
                    "rotation": o.rotation.tolist(),
                    "density": o.density,
                }
                for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        objs = [
            Primitive(
                shape=o["shape"],
                center=o["center"],
                size=o["size"],
                rotation=o["rotation"],
                density=float(o["density"]),
            )
            for o in d["objects"]
        ]
        return cls(objects=objs, fov_radius=float(d["fov_radius"]))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path) -> "Scene":
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def generate_scene(seed: int, geom: OrbitGeometry) -> Scene:
    """Deterministic random scene of 5..10 primitives inside the FOV ball."""
    B = geom.fov_radius
    if B <= 0:
        raise ValueError("field-of-view radius must be positive")
    rng = np.random.default_rng(seed)
    count = int(rng.integers(_MIN_OBJECTS, _MAX_OBJECTS + 1))
    objects = []
    for _ in range(count):
        shape = SHAPES[rng.integers(len(SHAPES))]
        size = rng.uniform(_SIZE_LO * B, _SIZE_HI * B, size=3)
        if shape == "sphere":
            size[1] = size[2] = size[0]
        elif shape == "cylinder":
            size[1] = size[0]
        rot = _random_rotation(rng)
        prim = Primitive(
            shape=shape,
            center=np.zeros(3),
            size=size,
            rotation=rot,
            density=float(rng.uniform(_DENSITY_LO, _DENSITY_HI)),
        )
        # Radial placement |c| = R_adm * U^(1/5) is biased toward the FOV
        # boundary on purpose: Radon planes nearly tangent to the B-ball are
        # only measured through objects that reach the boundary, and scenes
        # must excite those lines for the weight map to be learnable there.
        # The circumradius margin keeps the whole solid inside the B-ball.
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        max_shift = max(0.0, B - prim.circumradius)
        prim.center = direction * max_shift * rng.random() ** 0.2
        objects.append(prim)
    return Scene(objects=objects, fov_radius=B)


def _grid_points(grid: VolumeGrid) -> np.ndarray:
    z, y, x = np.meshgrid(
        grid.z_values(), grid.y_values(), grid.x_values(), indexing="ij"
    )
    return np.stack([x, y, z], axis=-1)


def rasterize(scene: Scene, grid: VolumeGrid) -> np.ndarray:
    """Sum of densities of the objects covering each voxel center."""
    vol = np.zeros(grid.shape)
    if not scene.objects:
        return vol
    pts = _grid_points(grid).reshape(-1, 3)
    for obj in scene.objects:
        inside = obj.contains(pts).reshape(grid.shape)
        vol += obj.density * inside
    return vol


def sphere_phantom(grid: VolumeGrid, radius: float, density: float = 1.0) -> np.ndarray:
    """Single sphere at the grid center (hard voxel-center threshold)."""
    if radius > grid.ball_radius:
        raise ValueError(
            f"sphere radius {radius} exceeds the grid ball radius {grid.ball_radius}"
        )
    cx = grid.origin[0] + 0.5 * (grid.nx - 1) * grid.spacing
    cy = grid.origin[1] + 0.5 * (grid.ny - 1) * grid.spacing
    cz = grid.origin[2] + 0.5 * (grid.nz - 1) * grid.spacing
    x = grid.x_values() - cx
    y = grid.y_values() - cy
    z = grid.z_values() - cz
    r2 = (
        x[None, None, :] ** 2 + y[None, :, None] ** 2 + z[:, None, None] ** 2
    )
    return density * (r2 <= radius * radius)
