"""Projection rendering: soft log-sum-exp law, Beer-Lambert variant, PX projector."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sampling import sample_positions
from .volume import DimensionError, Volume, read_header, write_header

SOFT = "soft"
BEER_LAMBERT = "beer_lambert"
LAWS = (SOFT, BEER_LAMBERT)

AIR = -1000.0
MU_NORMALIZER = 2000.0


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class RenderParams:
    C: float = 1000.0
    S: float = 1200.0
    law: str = SOFT

    def __post_init__(self):
        if self.S <= 0:
            raise RenderError("S must be positive")
        if self.law not in LAWS:
            raise RenderError(f"unknown law {self.law!r}; expected one of {LAWS}")


@dataclass(frozen=True, eq=False)
class ProjectionImage:
    """Detector image; ``pixels[row, column]`` with one column per ray."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if pixels.ndim != 2:
            raise RenderError("projection image must be 2D")
        if not np.all(np.isfinite(pixels)):
            raise RenderError("projection image contains non-finite values")
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def logsumexp(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def render_soft(samples, Ns: float, params: RenderParams = RenderParams()):
    """``S * (log sum_i exp((V_i - C) / S) - log Ns)`` over the last axis."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[-1] == 0:
        raise RenderError("no samples to render")
    if Ns <= 0:
        raise RenderError("sampling rate must be positive")
    return params.S * (logsumexp((samples - params.C) / params.S) - math.log(Ns))


def attenuation(samples):
    return np.maximum(np.asarray(samples, dtype=np.float64) - AIR, 0.0) / MU_NORMALIZER


def render_beer_lambert(samples, step: float, params: RenderParams | None = None):
    """Line integral ``sum_i mu(V_i) * step`` with a linear HU-to-attenuation map."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[-1] == 0:
        raise RenderError("no samples to render")
    if step <= 0:
        raise RenderError("step must be positive")
    return np.sum(attenuation(samples), axis=-1) * step


def render(samples, Ns: float, params: RenderParams):
    if params.law == SOFT:
        return render_soft(samples, Ns, params)
    return render_beer_lambert(samples, 1.0 / Ns, params)


def continuous_index(coord, n: int):
    """Normalized coordinate -> fractional voxel index, clamped to the grid."""
    return np.clip((np.asarray(coord, dtype=np.float64) + 1.0) * (n / 2.0) - 0.5, 0.0, n - 1)


def _corners(idx, n):
    i0 = np.floor(idx).astype(np.intp)
    i0 = np.minimum(i0, max(n - 2, 0))
    i1 = np.minimum(i0 + 1, n - 1)
    return i0, i1, idx - i0


def trilinear(volume: Volume, position):
    """Interpolate ``volume`` at normalized ``(..., 3)`` positions, clamping outside."""
    pos = np.asarray(position, dtype=np.float64)
    nx, ny, nz = volume.dims
    data = volume.data
    x0, x1, fx = _corners(continuous_index(pos[..., 0], nx), nx)
    y0, y1, fy = _corners(continuous_index(pos[..., 1], ny), ny)
    z0, z1, fz = _corners(continuous_index(pos[..., 2], nz), nz)
    c00 = data[z0, y0, x0] * (1 - fx) + data[z0, y0, x1] * fx
    c01 = data[z0, y1, x0] * (1 - fx) + data[z0, y1, x1] * fx
    c10 = data[z1, y0, x0] * (1 - fx) + data[z1, y0, x1] * fx
    c11 = data[z1, y1, x0] * (1 - fx) + data[z1, y1, x1] * fx
    c0 = c00 * (1 - fy) + c01 * fy
    c1 = c10 * (1 - fy) + c11 * fy
    return c0 * (1 - fz) + c1 * fz


def bilinear_columns(volume: Volume, xy):
    """Interpolate every z-slice at axial positions ``(k, 2)``; returns ``(nz, k)``.

    Equivalent to :func:`trilinear` evaluated at each slice center.
    """
    xy = np.asarray(xy, dtype=np.float64)
    nx, ny, _ = volume.dims
    data = volume.data.astype(np.float64)
    x0, x1, fx = _corners(continuous_index(xy[:, 0], nx), nx)
    y0, y1, fy = _corners(continuous_index(xy[:, 1], ny), ny)
    bottom = data[:, y0, x0] * (1 - fx) + data[:, y0, x1] * fx
    top = data[:, y1, x0] * (1 - fx) + data[:, y1, x1] * fx
    return bottom * (1 - fy) + top * fy


def project_ray(volume: Volume, ray, Ns: float, params: RenderParams) -> np.ndarray:
    xy = sample_positions(ray, Ns)
    if len(xy) == 0:
        raise RenderError(f"ray at segment {ray.segment} has no samples at Ns={Ns}")
    return render(bilinear_columns(volume, xy), Ns, params)


def project_volume(volume: Volume, rays, Ns: float = 1.0, params: RenderParams = RenderParams(),
                   threads: int = 1) -> ProjectionImage:
    """Render one detector column per ray; row ``j`` samples z-slice ``j``."""
    if not rays:
        raise DimensionError("no rays to project")
    work = lambda ray: project_ray(volume, ray, Ns, params)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            columns = list(pool.map(work, rays))
    else:
        columns = [work(r) for r in rays]
    return ProjectionImage(np.stack(columns, axis=1))


# ---------------------------------------------------------------------------
# image files
# ---------------------------------------------------------------------------

def save_pgm(image: ProjectionImage, path) -> tuple[float, float]:
    """16-bit PGM (min-max scaled) plus a ``.scale`` sidecar holding the range."""
    lo, hi = float(image.pixels.min()), float(image.pixels.max())
    span = hi - lo if hi > lo else 1.0
    levels = np.round((image.pixels - lo) / span * 65535).astype(">u2")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n65535\n".encode("ascii"))
        # row 0 is the bottom slice; PGM stores the top row first
        fh.write(levels[::-1].tobytes())
    path.with_suffix(path.suffix + ".scale").write_text(f"min: {lo!r}\nmax: {hi!r}\n")
    return lo, hi


def save_image(image: ProjectionImage, path) -> None:
    """Raw float32 image using the volume header with ``nz = 1``."""
    with open(path, "wb") as fh:
        write_header(fh, (image.width, image.height, 1), (1.0, 1.0, 1.0))
        fh.write(image.pixels.astype("<f4").tobytes())


def load_image(path) -> ProjectionImage:
    header, payload = read_header(Path(path).read_bytes())
    try:
        width, height, depth = (int(v) for v in header["dims"].split())
    except (KeyError, ValueError):
        raise RenderError("image header lacks valid dims") from None
    if depth != 1 or len(payload) != 4 * width * height:
        raise RenderError("image payload does not match header")
    pixels = np.frombuffer(payload, dtype="<f4").reshape(height, width)
    return ProjectionImage(pixels.astype(np.float64))
