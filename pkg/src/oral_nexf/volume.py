"""Voxel volumes, procedural dental-arch phantoms and the volume file format.

The file format is a small text header followed by a raw payload::

    dims: 64 64 32
    spacing: 1.0 1.0 1.0
    dtype: f32le
    <blank line>
    <nx*ny*nz little-endian float32 values, x fastest>
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .geometry import ArcLengthTable, FocalCurve

DTYPE = "f32le"


class VolumeError(ValueError):
    pass


class DimensionError(VolumeError):
    pass


@dataclass(frozen=True, eq=False)
class Volume:
    """Dense scalar grid; ``data`` is indexed ``[z, y, x]`` (x fastest in memory)."""

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype="<f4")
        if data.ndim != 3:
            raise DimensionError(f"expected a 3D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise VolumeError("volume contains non-finite values")
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise VolumeError(f"invalid spacing {self.spacing}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @classmethod
    def from_flat(cls, dims, values, spacing=(1.0, 1.0, 1.0)) -> "Volume":
        nx, ny, nz = dims
        values = np.asarray(values)
        if values.size != nx * ny * nz:
            raise DimensionError(f"{values.size} values for dims {dims}")
        return cls(values.reshape(nz, ny, nx), spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    def __eq__(self, other):
        if not isinstance(other, Volume):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.data, other.data)


def voxel_centers(n: int) -> np.ndarray:
    """Normalized [-1, 1] coordinates of ``n`` voxel centers along one axis."""
    return -1.0 + (2.0 * np.arange(n) + 1.0) / n


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def write_header(fh, dims, spacing, **extra):
    lines = [
        "dims: " + " ".join(str(int(d)) for d in dims),
        "spacing: " + " ".join(repr(float(s)) for s in spacing),
        f"dtype: {DTYPE}",
    ]
    lines += [f"{k}: {v}" for k, v in extra.items()]
    fh.write(("\n".join(lines) + "\n\n").encode("ascii"))


def read_header(raw: bytes) -> tuple[dict[str, str], bytes]:
    end = raw.find(b"\n\n")
    if end < 0:
        raise VolumeError("missing blank line terminating the header")
    header = {}
    for lineno, line in enumerate(raw[:end].decode("ascii", errors="replace").splitlines(), 1):
        key, sep, value = line.partition(":")
        if not sep or not key.strip():
            raise VolumeError(f"malformed header line {lineno}: {line!r}")
        header[key.strip()] = value.strip()
    return header, raw[end + 2:]


def _parse_triple(header, key, cast):
    try:
        values = tuple(cast(v) for v in header[key].split())
    except KeyError:
        raise VolumeError(f"header lacks '{key}'") from None
    except ValueError:
        raise VolumeError(f"malformed '{key}' value: {header[key]!r}") from None
    if len(values) != 3:
        raise VolumeError(f"'{key}' needs three values")
    return values


def save_volume(volume: Volume, path) -> None:
    with open(path, "wb") as fh:
        write_header(fh, volume.dims, volume.spacing)
        fh.write(volume.data.tobytes(order="C"))


def load_volume(path) -> Volume:
    header, payload = read_header(Path(path).read_bytes())
    if header.get("dtype") != DTYPE:
        raise VolumeError(f"unsupported dtype {header.get('dtype')!r}")
    dims = _parse_triple(header, "dims", int)
    spacing = _parse_triple(header, "spacing", float)
    if min(dims) < 1:
        raise VolumeError(f"invalid dims {dims}")
    expected = 4 * dims[0] * dims[1] * dims[2]
    if len(payload) != expected:
        raise VolumeError(f"size mismatch: header declares {expected} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4")
    return Volume.from_flat(dims, values, spacing)


# ---------------------------------------------------------------------------
# phantom
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhantomSpec:
    curve: FocalCurve = field(default_factory=FocalCurve)
    tooth_count: int = 8
    tooth_axes: tuple[float, float, float] | None = None  # (tangent, normal, z) in voxels
    jaw_intensity: float = 1400.0
    tooth_intensity: float = 2200.0
    soft_intensity: float = 300.0
    background_intensity: float = -1000.0
    jaw_halfwidth: float = 0.1  # normalized units, across the arch
    soft_halfwidth: float = 0.22
    jaw_z: tuple[float, float] = (0.12, 0.6)  # fractions of nz
    soft_z: tuple[float, float] = (0.05, 0.95)
    tooth_z: float = 0.62
    jitter: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.tooth_count < 0:
            raise VolumeError("tooth count must be >= 0")
        if not (self.background_intensity < self.soft_intensity
                < self.jaw_intensity < self.tooth_intensity):
            raise VolumeError("intensities must satisfy background < soft < jaw < tooth")


@dataclass(frozen=True)
class Tooth:
    center: tuple[float, float, float]  # voxel index coordinates (x, y, z)
    axes: tuple[float, float, float]  # semi-axes: along tangent, across arch, z
    tangent: tuple[float, float]  # unit vector in voxel space


def _check_dims(dims):
    if len(dims) != 3 or min(dims) < 8:
        raise DimensionError(f"phantom dims must be three values >= 8, got {dims}")
    return tuple(int(d) for d in dims)


def tooth_layout(spec: PhantomSpec, dims) -> list[Tooth]:
    """Ellipsoid teeth at equal arc-length spacing along the arch."""
    nx, ny, nz = _check_dims(dims)
    n = spec.tooth_count
    if n == 0:
        return []
    table = ArcLengthTable.build(spec.curve)
    u = table.invert((np.arange(n) + 0.5) * table.length / n)
    to_vox = np.array([nx / 2.0, ny / 2.0])
    centers = (spec.curve.points(u) + 1.0) * to_vox - 0.5
    tangents = spec.curve.derivative(u) * to_vox
    tangents /= np.linalg.norm(tangents, axis=-1, keepdims=True)

    if spec.tooth_axes is None:
        gap = table.length * min(nx, ny) / 2.0 / n
        base = np.array([0.35 * gap, 1.1 * spec.jaw_halfwidth * min(nx, ny) / 2.0, 0.2 * nz])
    else:
        base = np.asarray(spec.tooth_axes, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    scale = 1.0 + spec.jitter * rng.uniform(-1.0, 1.0, size=(n, 3))
    z_shift = spec.jitter * base[2] * rng.uniform(-1.0, 1.0, size=n)
    z0 = spec.tooth_z * nz - 0.5
    return [
        Tooth(
            center=(float(c[0]), float(c[1]), float(z0 + dz)),
            axes=tuple(float(a) for a in base * s),
            tangent=(float(t[0]), float(t[1])),
        )
        for c, t, s, dz in zip(centers, tangents, scale, z_shift)
    ]


def _inside_tooth(tooth: Tooth, x, y, z):
    dx, dy, dz = x - tooth.center[0], y - tooth.center[1], z - tooth.center[2]
    tx, ty = tooth.tangent
    along = dx * tx + dy * ty
    across = -dx * ty + dy * tx
    a, b, c = tooth.axes
    return (along / a) ** 2 + (across / b) ** 2 + (dz / c) ** 2 <= 1.0


def arch_distance(curve: FocalCurve, dims) -> np.ndarray:
    """Distance (normalized units) from each axial voxel center to the arch, shape (ny, nx)."""
    nx, ny = dims[0], dims[1]
    dense = curve.points(np.linspace(0.0, 1.0, 8192))
    xx, yy = np.meshgrid(voxel_centers(nx), voxel_centers(ny))
    dist, _ = cKDTree(dense).query(np.stack([xx.ravel(), yy.ravel()], axis=1))
    return dist.reshape(ny, nx)


def arch_mask(spec: PhantomSpec, dims) -> np.ndarray:
    """Boolean ``[z, y, x]`` mask of the soft-tissue band (the region holding anatomy)."""
    nx, ny, nz = dims
    dist = arch_distance(spec.curve, dims)
    zc = (np.arange(nz) + 0.5) / nz
    in_z = (zc >= spec.soft_z[0]) & (zc <= spec.soft_z[1])
    return in_z[:, None, None] & (dist <= spec.soft_halfwidth)[None]


def generate_phantom(spec: PhantomSpec, dims=(64, 64, 32)) -> Volume:
    nx, ny, nz = _check_dims(dims)
    dist = arch_distance(spec.curve, (nx, ny, nz))
    zc = (np.arange(nz) + 0.5) / nz

    data = np.full((nz, ny, nx), spec.background_intensity, dtype=np.float64)
    soft_z = (zc >= spec.soft_z[0]) & (zc <= spec.soft_z[1])
    jaw_z = (zc >= spec.jaw_z[0]) & (zc <= spec.jaw_z[1])
    data[soft_z[:, None, None] & (dist <= spec.soft_halfwidth)[None]] = spec.soft_intensity
    data[jaw_z[:, None, None] & (dist <= spec.jaw_halfwidth)[None]] = spec.jaw_intensity

    z, y, x = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    for tooth in tooth_layout(spec, (nx, ny, nz)):
        r = math.ceil(max(tooth.axes)) + 1
        cx, cy, cz = (int(round(c)) for c in tooth.center)
        box = (slice(max(cz - r, 0), cz + r + 1), slice(max(cy - r, 0), cy + r + 1),
               slice(max(cx - r, 0), cx + r + 1))
        inside = _inside_tooth(tooth, x[box], y[box], z[box])
        data[box][inside] = spec.tooth_intensity

    spacing = (200.0 / nx, 200.0 / ny, 100.0 / nz)  # ~20 cm axial field, 10 cm tall
    return Volume(data, spacing)
