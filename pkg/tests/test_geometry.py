import math

import numpy as np
import pytest
from scipy.integrate import quad

from oral_nexf.geometry import (
    FocalCurve,
    GeometryError,
    arc_length,
    clip_to_square,
    curve_point,
    fan_angles,
    generate_rays,
    segment_curve,
)

DEFAULT = FocalCurve()


def _speed(curve, u):
    dx, dy = curve.derivative(u)
    return math.hypot(dx, dy)


def _quad_arc(curve, u0, u1):
    return quad(lambda u: _speed(curve, u), u0, u1, epsabs=0, epsrel=1e-12, limit=200)[0]


def test_symmetric_peak_profile_is_one():
    c = FocalCurve(alpha=2, beta=2)
    assert c.profile(0.5) == 1.0
    x, y = curve_point(c, 0.5)
    assert y == pytest.approx(c.offset[1] + c.scale[1])


def test_symmetric_curve_mirrors_about_midline():
    c = FocalCurve(alpha=2, beta=2, offset=(0.0, -0.5))
    for u in np.linspace(0, 1, 11):
        x1, y1 = curve_point(c, u)
        x2, y2 = curve_point(c, 1 - u)
        assert x1 == pytest.approx(-x2, abs=1e-15)
        assert y1 == pytest.approx(y2, abs=1e-15)


def test_curve_point_rejects_out_of_range():
    with pytest.raises(GeometryError):
        curve_point(DEFAULT, 1.01)


@pytest.mark.parametrize("curve", [DEFAULT, FocalCurve(2.5, 3.0, (0.6, 0.9), (0.1, -0.4))])
def test_arc_length_matches_adaptive_quadrature(curve):
    assert arc_length(curve) == pytest.approx(_quad_arc(curve, 0.0, 1.0), rel=1e-6)


def test_derivative_matches_finite_differences():
    c = FocalCurve(2.5, 3.0, (0.6, 0.9), (0.1, -0.4))
    for u in (0.1, 0.37, 0.8):
        h = 1e-6
        fd = (c.points(u + h) - c.points(u - h)) / (2 * h)
        np.testing.assert_allclose(c.derivative(u), fd, rtol=1e-6, atol=1e-8)


def test_straight_line_segments_are_equally_spaced():
    line = FocalCurve(scale=(0.8, 0.0), offset=(0.0, 0.2))
    points, tangents = segment_curve(line, 4)
    gaps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    np.testing.assert_allclose(gaps, gaps[0], rtol=1e-12)
    np.testing.assert_allclose(points[:, 1], 0.2)
    np.testing.assert_allclose(tangents, [[1.0, 0.0]] * 4, atol=1e-12)


def test_576_segments_have_equal_arc_spacing():
    points, _ = segment_curve(DEFAULT, 576)
    # recover each point's parameter from its x coordinate (x is linear in u)
    u = (points[:, 0] - DEFAULT.offset[0]) / (2 * DEFAULT.scale[0]) + 0.5
    spacing = np.array([_quad_arc(DEFAULT, a, b) for a, b in zip(u[:-1], u[1:])])
    assert spacing.max() / spacing.min() < 1.0001
    assert spacing.sum() == pytest.approx(arc_length(DEFAULT) * 575 / 576, rel=1e-6)


def test_tangents_are_unit():
    _, tangents = segment_curve(DEFAULT, 100)
    np.testing.assert_allclose(np.linalg.norm(tangents, axis=1), 1.0, atol=1e-12)


def test_reversed_parameterization_reverses_points():
    c = FocalCurve(2.5, 3.0, (0.6, 0.9), (0.1, -0.4))
    fwd, _ = segment_curve(c, 12)
    back, _ = segment_curve(c.reversed(), 12)
    np.testing.assert_allclose(back, fwd[::-1], atol=1e-9)


def test_segmenting_needs_two_segments():
    with pytest.raises(GeometryError):
        segment_curve(DEFAULT, 1)


def test_degenerate_curve_is_rejected():
    with pytest.raises(GeometryError):
        segment_curve(FocalCurve(scale=(0.0, 0.0)), 4)


def test_normal_ray_is_perpendicular_to_tangent():
    _, tangents = segment_curve(DEFAULT, 64)
    rays = generate_rays(DEFAULT, 64)
    for ray, t in zip(rays, tangents):
        assert abs(np.dot(ray.direction, t)) < 1e-9
        assert np.linalg.norm(ray.direction) == pytest.approx(1.0, abs=1e-9)


def test_normal_rays_point_into_the_arch():
    rays = generate_rays(DEFAULT, 9)
    apex = rays[4]
    # the arch peaks at the top, so the apex ray travels downward
    assert apex.direction[1] < -0.99


def test_extreme_angles_mirror_about_normal():
    _, tangents = segment_curve(DEFAULT, 20)
    rays = generate_rays(DEFAULT, 20, [math.pi / 4, math.pi / 2, 3 * math.pi / 4])
    for k, t in enumerate(tangents):
        lo, mid, hi = (np.array(r.direction) for r in rays[3 * k:3 * k + 3])
        reflected = 2 * np.dot(lo, mid) * mid - lo
        np.testing.assert_allclose(reflected, hi, atol=1e-12)
        assert np.dot(lo, t) == pytest.approx(math.cos(math.pi / 4))
        assert np.dot(hi, t) == pytest.approx(-math.cos(math.pi / 4))


def test_ray_count_is_segments_times_angles():
    assert len(generate_rays(DEFAULT, 30, fan_angles(5))) == 150


@pytest.mark.parametrize("angle", [math.pi / 4 - 1e-3, 3 * math.pi / 4 + 1e-3, 0.0])
def test_angles_outside_range_are_rejected(angle):
    with pytest.raises(GeometryError):
        generate_rays(DEFAULT, 4, [angle])


def _stepped_interval(ray, step=1e-4):
    # march along the whole line and record where it is inside the square
    t = np.arange(-5.0, 5.0, step) / ray.pitch
    pts = np.asarray(ray.origin) + (t * ray.pitch)[:, None] * np.asarray(ray.direction)
    inside = np.all(np.abs(pts) <= 1.0, axis=1)
    return t[inside].min(), t[inside].max()


def test_clipping_matches_parametric_stepping():
    rays = generate_rays(DEFAULT, 576)
    for ray in rays[::1]:
        lo, hi = _stepped_interval(ray, step=2e-4)
        assert ray.t_near == pytest.approx(lo, abs=2e-4)
        assert ray.t_far == pytest.approx(hi, abs=2e-4)


def test_clipping_with_pitch_units():
    rays = generate_rays(DEFAULT, 16, fan_angles(3), pitch=2 / 64)
    for ray in rays:
        lo, hi = _stepped_interval(ray, step=2e-4)
        assert ray.t_near == pytest.approx(lo, abs=2e-4 / ray.pitch)
        assert ray.t_far == pytest.approx(hi, abs=2e-4 / ray.pitch)


def test_random_points_on_chords_stay_inside():
    rng = np.random.default_rng(4)
    for ray in generate_rays(DEFAULT, 48, fan_angles(5), pitch=0.05):
        t = rng.uniform(ray.t_near, ray.t_far, size=1000)
        assert np.all(np.abs(ray.at(t)) <= 1.0 + 1e-12)


def test_clip_to_square_axis_aligned():
    assert clip_to_square((0.0, 0.0), (1.0, 0.0)) == (-1.0, 1.0)
    lo, hi = clip_to_square((0.0, 2.0), (1.0, 0.0))
    assert math.isnan(lo) and math.isnan(hi)
