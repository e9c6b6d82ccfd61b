"""Dynamic sampling: per-ray random rates and the sample positions they induce."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DYNAMIC = "dynamic"
FIXED = "fixed"

# sample i sits at t_near + (i - NODE_OFFSET) / Ns; 0 gives right-endpoint nodes
NODE_OFFSET = 0.5


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    rate_min: float = 0.25
    rate_max: float = 1.25
    mode: str = DYNAMIC
    fixed_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.rate_min <= self.rate_max:
            raise SamplingError("need 0 < rate_min <= rate_max")
        if self.mode not in (DYNAMIC, FIXED):
            raise SamplingError(f"unknown sampling mode {self.mode!r}")
        if self.fixed_rate <= 0:
            raise SamplingError("fixed rate must be positive")


def draw_rate(config: SamplerConfig, rng: np.random.Generator, size=None):
    if config.mode == FIXED:
        return config.fixed_rate if size is None else np.full(size, config.fixed_rate)
    return rng.uniform(config.rate_min, config.rate_max, size=size)


def sample_count(ray, Ns: float) -> int:
    return int(math.floor(Ns * (ray.t_far - ray.t_near)))


def sample_ts(ray, Ns: float, offset: float = NODE_OFFSET) -> np.ndarray:
    """``t_near + (i - offset) / Ns`` for ``i = 1 .. floor(Ns * (t_far - t_near))``.

    The default cell-centered nodes make the Riemann sum behind the soft
    renderer midpoint-accurate; ``offset=0`` places nodes at cell ends.
    """
    if Ns <= 0:
        raise SamplingError("sampling rate must be positive")
    if not ray.t_far > ray.t_near:
        raise SamplingError("ray interval is empty")
    i = np.arange(1, sample_count(ray, Ns) + 1, dtype=np.float64)
    return ray.t_near + (i - offset) / Ns


def sample_positions(ray, Ns: float, offset: float = NODE_OFFSET) -> np.ndarray:
    """Axial positions ``(k, 2)`` of the samples on ``ray`` at rate ``Ns``."""
    return ray.at(sample_ts(ray, Ns, offset))


def usable_rate(ray, Ns: float, config: SamplerConfig, rng: np.random.Generator) -> float:
    """Return ``Ns``, or a redrawn rate in ``[1, rate_max]`` if it yields no samples."""
    if sample_count(ray, Ns) >= 1:
        return Ns
    length = ray.t_far - ray.t_near
    hi = max(config.rate_max, 1.0)
    Ns = rng.uniform(1.0, hi)
    if sample_count(ray, Ns) >= 1:
        return Ns
    # chord shorter than 1/rate_max: smallest rate giving exactly one sample
    return math.nextafter(1.0 / length, math.inf)
