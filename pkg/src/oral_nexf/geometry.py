"""Panoramic focal-curve geometry and projection-ray generation.

All coordinates live in the normalized axial square [-1, 1]^2.  A ray
position at parameter ``t`` is ``origin + t * pitch * direction`` so that
``t`` can be expressed in voxel steps while the geometry stays resolution
free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

N_KNOTS = 4096
ANGLE_MIN = math.pi / 4
ANGLE_MAX = 3 * math.pi / 4
_ANGLE_TOL = 1e-12


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class FocalCurve:
    """Beta-function arch.

    ``x`` runs linearly across ``[-scale[0], scale[0]]`` while ``y`` follows the
    beta-density shape ``u**(alpha-1) * (1-u)**(beta-1)`` normalized to peak 1.
    A negative ``scale[0]`` traverses the arch in the opposite direction.
    """

    alpha: float = 2.0
    beta: float = 2.0
    scale: tuple[float, float] = (0.75, 1.1)
    offset: tuple[float, float] = (0.0, -0.55)

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise GeometryError("alpha and beta must be positive")
        if self.scale[1] < 0:
            raise GeometryError("y scale must be >= 0")

    @property
    def peak_u(self) -> float:
        a, b = self.alpha, self.beta
        if a >= 1 and b >= 1 and a + b > 2:
            return (a - 1) / (a + b - 2)
        # non-unimodal shapes: fall back to the maximum over a dense table
        u = np.linspace(0.0, 1.0, N_KNOTS)
        return float(u[np.argmax(_beta_shape(u, a, b))])

    def reversed(self) -> "FocalCurve":
        """Same arch traversed from the other end."""
        return FocalCurve(self.beta, self.alpha, (-self.scale[0], self.scale[1]), self.offset)

    def profile(self, u):
        u = np.asarray(u, dtype=np.float64)
        peak = _beta_shape(np.float64(self.peak_u), self.alpha, self.beta)
        return _beta_shape(u, self.alpha, self.beta) / peak

    def points(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        x = self.offset[0] + self.scale[0] * (2.0 * u - 1.0)
        y = self.offset[1] + self.scale[1] * self.profile(u)
        return np.stack([x, y], axis=-1)

    def derivative(self, u) -> np.ndarray:
        """dP/du, analytic."""
        u = np.asarray(u, dtype=np.float64)
        a, b = self.alpha, self.beta
        peak = _beta_shape(np.float64(self.peak_u), a, b)
        dy = _power_term(u, a - 1, b - 1) - _power_term(1.0 - u, b - 1, a - 1)
        dx = np.full_like(u, 2.0 * self.scale[0])
        return np.stack([dx, self.scale[1] * dy / peak], axis=-1)


def _beta_shape(u, a, b):
    return np.power(u, a - 1) * np.power(1.0 - u, b - 1)


def _power_term(v, p, q):
    # p * v**(p-1) * (1-v)**q, with the p == 0 term dropped exactly
    if p == 0:
        return np.zeros_like(v)
    with np.errstate(divide="ignore"):
        return p * np.power(v, p - 1) * np.power(1.0 - v, q)


@dataclass(frozen=True)
class Ray:
    origin: tuple[float, float]
    direction: tuple[float, float]
    t_near: float
    t_far: float
    segment: int = 0
    angle: float = math.pi / 2
    pitch: float = 1.0  # normalized length of one unit of t

    def at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        o = np.asarray(self.origin)
        d = np.asarray(self.direction)
        return o + (t * self.pitch)[..., None] * d


def curve_point(curve: FocalCurve, u: float) -> tuple[float, float]:
    if not 0.0 <= u <= 1.0:
        raise GeometryError(f"u={u} outside [0, 1]")
    x, y = curve.points(u)
    return float(x), float(y)


@dataclass
class ArcLengthTable:
    """Cumulative chord length over ``N_KNOTS`` uniform parameter knots."""

    u: np.ndarray
    s: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, curve: FocalCurve, n_knots: int = N_KNOTS) -> "ArcLengthTable":
        u = np.linspace(0.0, 1.0, n_knots)
        # Simpson on each knot interval keeps the table accurate well past 1e-4
        mid = 0.5 * (u[1:] + u[:-1])
        speed = lambda q: np.linalg.norm(curve.derivative(q), axis=-1)
        h = np.diff(u)
        pieces = h / 6.0 * (speed(u[:-1]) + 4.0 * speed(mid) + speed(u[1:]))
        s = np.concatenate([[0.0], np.cumsum(pieces)])
        return cls(u=u, s=s)

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def invert(self, s) -> np.ndarray:
        return np.interp(s, self.s, self.u)


def arc_length(curve: FocalCurve) -> float:
    return ArcLengthTable.build(curve).length


def segment_curve(curve: FocalCurve, n_segments: int):
    """Centers and unit tangents of ``n_segments`` equal-length pieces of the arch.

    Returns ``(points, tangents)``, both of shape ``(n_segments, 2)``.
    """
    if n_segments < 2:
        raise GeometryError("need at least 2 segments")
    table = ArcLengthTable.build(curve)
    if table.length <= 0:
        raise GeometryError("degenerate curve of zero length")
    s = (np.arange(n_segments) + 0.5) * table.length / n_segments
    u = table.invert(s)
    points = curve.points(u)
    tangents = curve.derivative(u)
    tangents /= np.linalg.norm(tangents, axis=-1, keepdims=True)
    return points, tangents


def _inward_sign(curve: FocalCurve) -> float:
    """+1 if rotating the tangent clockwise points into the concave side."""
    u = curve.peak_u
    eps = 1e-4
    d1 = curve.derivative(u)
    d2 = (curve.derivative(min(u + eps, 1.0)) - curve.derivative(max(u - eps, 0.0))) / (2 * eps)
    cross = d1[0] * d2[1] - d1[1] * d2[0]
    return 1.0 if cross <= 0 else -1.0


def clip_to_square(point, direction, half: float = 1.0) -> tuple[float, float]:
    """Parameter interval where ``point + s * direction`` lies inside [-half, half]^2."""
    lo, hi = -math.inf, math.inf
    for p, d in zip(point, direction):
        if abs(d) < 1e-15:
            if abs(p) > half:
                return math.nan, math.nan
            continue
        a, b = (-half - p) / d, (half - p) / d
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if hi <= lo:
        return math.nan, math.nan
    return lo, hi


def generate_rays(curve: FocalCurve, n_segments: int, angles=(math.pi / 2,), pitch: float = 1.0) -> list[Ray]:
    """One ray per (segment, angle), ordered segment-major.

    Each ray crosses the arch at its segment center, entering the volume on the
    convex (source) side.  The origin sits on the square boundary, so
    ``t_near == 0`` and ``t_far`` is the chord length in units of ``pitch``.
    """
    angles = [float(a) for a in angles]
    for a in angles:
        if not ANGLE_MIN - _ANGLE_TOL <= a <= ANGLE_MAX + _ANGLE_TOL:
            raise GeometryError(f"angle {a} outside [pi/4, 3pi/4]")
    if pitch <= 0:
        raise GeometryError("pitch must be positive")
    points, tangents = segment_curve(curve, n_segments)
    sign = _inward_sign(curve)
    rays = []
    for k, (p, tan) in enumerate(zip(points, tangents)):
        normal = sign * np.array([tan[1], -tan[0]])
        for a in angles:
            d = math.cos(a) * tan + math.sin(a) * normal
            d /= np.linalg.norm(d)
            s_in, s_out = clip_to_square(p, d)
            if not s_in < 0 < s_out:
                raise GeometryError(f"segment {k} center lies outside the volume footprint")
            o = p + s_in * d
            rays.append(Ray(
                origin=(float(o[0]), float(o[1])),
                direction=(float(d[0]), float(d[1])),
                t_near=0.0,
                t_far=float((s_out - s_in) / pitch),
                segment=k,
                angle=a,
                pitch=pitch,
            ))
    return rays


def fan_angles(n: int) -> list[float]:
    """``n`` angles evenly covering [pi/4, 3pi/4]; n=1 gives the normal ray."""
    if n <= 1:
        return [math.pi / 2]
    return list(np.linspace(ANGLE_MIN, ANGLE_MAX, n))
