"""File formats, dataset manifests, image export and quality metrics.

Arrays travel as a raw little-endian float payload plus a JSON sidecar
(`<path>.json`) holding shape, dtype, optional physical spacing, a role tag
and an optional geometry hash.  Writes are atomic (temp file + rename), so an
interrupted run never leaves a half-written artifact behind.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

_DTYPES = {"float32": np.dtype("<f4"), "float64": np.dtype("<f8")}

PSNR_CAP_DB = 999.0


class ArrayIOError(IOError):
    """Malformed or inconsistent array file."""


class MetricError(ValueError):
    """Metric undefined for the given inputs."""


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def hash_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_array(
    path,
    data: np.ndarray,
    spacing=None,
    role: str | None = None,
    geometry_hash: str | None = None,
) -> None:
    """Write payload to `path` and the sidecar to `path + '.json'`."""
    path = Path(path)
    data = np.asarray(data)
    if data.dtype == np.float64:
        dtype_name = "float64"
    elif data.dtype == np.float32:
        dtype_name = "float32"
    else:
        raise ArrayIOError(f"unsupported dtype {data.dtype}; use float32 or float64")
    payload = np.ascontiguousarray(data).astype(_DTYPES[dtype_name], copy=False)
    sidecar = {
        "shape": list(data.shape),
        "dtype": dtype_name,
        "spacing": None if spacing is None else list(np.atleast_1d(spacing).astype(float)),
        "role": role,
        "geometry_hash": geometry_hash,
    }
    _atomic_write(path, payload.tobytes())
    _atomic_write(
        Path(str(path) + ".json"),
        (json.dumps(sidecar, sort_keys=True, indent=1) + "\n").encode(),
    )


def read_array(path, expect_role: str | None = None, expect_geometry_hash: str | None = None):
    """Read an array file; returns (array, sidecar dict)."""
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise ArrayIOError(f"missing sidecar {sidecar_path}")
    try:
        meta = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError as e:
        raise ArrayIOError(f"unreadable sidecar {sidecar_path}: {e}") from e
    dtype_name = meta.get("dtype")
    if dtype_name not in _DTYPES:
        raise ArrayIOError(f"sidecar dtype {dtype_name!r} not supported")
    shape = tuple(int(n) for n in meta.get("shape", []))
    dtype = _DTYPES[dtype_name]
    expected = int(np.prod(shape)) * dtype.itemsize
    payload = path.read_bytes()
    if len(payload) != expected:
        raise ArrayIOError(
            f"payload {path} holds {len(payload)} bytes, sidecar implies {expected}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    if expect_role is not None and meta.get("role") != expect_role:
        raise ArrayIOError(
            f"{path} has role {meta.get('role')!r}, expected {expect_role!r}"
        )
    got_hash = meta.get("geometry_hash")
    if (
        expect_geometry_hash is not None
        and got_hash is not None
        and got_hash != expect_geometry_hash
    ):
        raise ArrayIOError(
            f"{path} was produced under a different geometry "
            f"({got_hash} != {expect_geometry_hash})"
        )
    return arr, meta


def export_slice(
    vol: np.ndarray, axis: int, index: int, path, window: tuple[float, float] | None = None
) -> None:
    """Write one slice of a volume as an 8-bit binary PGM image."""
    vol = np.asarray(vol)
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    if not 0 <= index < vol.shape[axis]:
        raise ValueError(f"index {index} out of range for axis {axis}")
    sl = np.take(vol, index, axis=axis).astype(np.float64)
    if window is None:
        lo, hi = float(sl.min()), float(sl.max())
    else:
        lo, hi = float(window[0]), float(window[1])
    if hi <= lo:
        gray = np.full(sl.shape, 127, dtype=np.uint8)
    else:
        gray = np.clip(np.round((sl - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode()
    _atomic_write(Path(path), header + gray.tobytes())


def psnr(x: np.ndarray, ref: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB against ref; capped at 999 dB."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {ref.shape}")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    peak = float(ref.max())
    if peak <= 0.0:
        raise MetricError("reference peak is not positive; PSNR undefined")
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak * peak / mse))


def pearson(map_a: np.ndarray, map_b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Pearson correlation over masked entries."""
    a = np.asarray(map_a, dtype=np.float64)
    b = np.asarray(map_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ValueError("mask shape does not match the maps")
        a = a[mask]
        b = b[mask]
    if a.size == 0:
        raise MetricError("empty mask")
    a = a.ravel() - a.mean()
    b = b.ravel() - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0.0:
        raise MetricError("zero-variance input; correlation undefined")
    return float(a @ b) / denom


def write_manifest(path, geometry_file: str, samples: list[dict]) -> None:
    """Dataset manifest: the geometry file plus per-sample file entries."""
    doc = {"geometry": geometry_file, "samples": samples}
    _atomic_write(
        Path(path), (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode()
    )


def read_manifest(path) -> dict:
    path = Path(path)
    doc = json.loads(path.read_text())
    if "geometry" not in doc or "samples" not in doc:
        raise ArrayIOError(f"manifest {path} missing geometry/samples fields")
    return doc
