import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oral_nexf.geometry import Ray
from oral_nexf.sampling import (
    SamplerConfig,
    SamplingError,
    draw_rate,
    sample_count,
    sample_positions,
    sample_ts,
    usable_rate,
)


def _ray(t_near, t_far, pitch=1.0):
    return Ray((-1.0, 0.0), (1.0, 0.0), t_near, t_far, pitch=pitch)


def test_fixed_mode_returns_one():
    cfg = SamplerConfig(mode="fixed")
    rng = np.random.default_rng(0)
    assert all(draw_rate(cfg, rng) == 1.0 for _ in range(100))


def test_dynamic_rates_follow_uniform_moments():
    rates = draw_rate(SamplerConfig(), np.random.default_rng(0), size=100_000)
    assert rates.min() >= 0.25 and rates.max() <= 1.25
    assert abs(rates.mean() - 0.75) <= 0.01
    # variance of U[0.25, 1.25] is 1/12
    assert rates.var() == pytest.approx(1 / 12, rel=0.02)


def test_same_seed_same_sequence():
    cfg = SamplerConfig()
    a = [draw_rate(cfg, np.random.default_rng(9)) for _ in range(5)]
    b = [draw_rate(cfg, np.random.default_rng(9)) for _ in range(5)]
    assert a == b


def test_invalid_sampler_configs():
    with pytest.raises(SamplingError):
        SamplerConfig(rate_min=0.0)
    with pytest.raises(SamplingError):
        SamplerConfig(rate_min=2.0, rate_max=1.0)
    with pytest.raises(SamplingError):
        SamplerConfig(mode="stratified")


def test_end_nodes_follow_summation_indices():
    np.testing.assert_array_equal(sample_ts(_ray(0.0, 2.0), 1.0, offset=0.0), [1.0, 2.0])


def test_default_nodes_are_cell_centers():
    np.testing.assert_array_equal(sample_ts(_ray(0.0, 2.0), 1.0), [0.5, 1.5])


def test_short_interval_floors_to_zero_samples():
    assert sample_count(_ray(0.0, 2.0), 0.25) == 0
    assert len(sample_ts(_ray(0.0, 2.0), 0.25)) == 0


def test_zero_sample_ray_escalates_rate():
    ray = _ray(0.0, 2.0)
    Ns = usable_rate(ray, 0.25, SamplerConfig(), np.random.default_rng(0))
    assert 1.0 <= Ns <= 1.25
    assert sample_count(ray, Ns) >= 1


def test_escalation_for_very_short_chord():
    ray = _ray(0.0, 0.3)
    Ns = usable_rate(ray, 0.5, SamplerConfig(), np.random.default_rng(0))
    assert sample_count(ray, Ns) == 1


def test_empty_interval_is_rejected():
    with pytest.raises(SamplingError):
        sample_ts(_ray(1.0, 1.0), 1.0)
    with pytest.raises(SamplingError):
        sample_ts(_ray(0.0, 1.0), 0.0)


@settings(max_examples=300, deadline=None)
@given(
    t_near=st.floats(0.0, 50.0),
    length=st.floats(0.01, 120.0),
    Ns=st.floats(0.25, 1.25),
    offset=st.sampled_from([0.0, 0.5]),
)
def test_positions_lie_on_interval_with_uniform_gap(t_near, length, Ns, offset):
    ray = _ray(t_near, t_near + length)
    t = sample_ts(ray, Ns, offset)
    assert len(t) == math.floor(Ns * length)
    if len(t):
        assert t.min() >= ray.t_near and t.max() <= ray.t_far + 1e-9
    if len(t) > 1:
        np.testing.assert_allclose(np.diff(t), 1.0 / Ns, rtol=1e-9)


def test_positions_convert_through_pitch():
    ray = Ray((-1.0, -1.0), (0.6, 0.8), 0.0, 10.0, pitch=0.1)
    xy = sample_positions(ray, 1.0, offset=0.0)
    np.testing.assert_allclose(xy[0], [-1.0 + 0.06, -1.0 + 0.08])
    np.testing.assert_allclose(np.linalg.norm(np.diff(xy, axis=0), axis=1), 0.1)
