"""Volume-to-volume quality metrics: PSNR, 3D SSIM, Dice and an overall score."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .volume import Volume

PSNR_CAP = 40.0
DICE_THRESHOLD = 1000.0


class MetricError(ValueError):
    pass


def _arrays(a, b):
    x = np.asarray(a.data if isinstance(a, Volume) else a, dtype=np.float64)
    y = np.asarray(b.data if isinstance(b, Volume) else b, dtype=np.float64)
    if x.shape != y.shape:
        raise MetricError(f"shape mismatch: {x.shape} vs {y.shape}")
    return x, y


def data_range(volume) -> float:
    x = np.asarray(volume.data if isinstance(volume, Volume) else volume, dtype=np.float64)
    return float(x.max() - x.min())


def psnr(a, b, data_range: float, mask=None) -> float:
    """``10 log10(range^2 / MSE)``; ``inf`` when the inputs agree exactly."""
    x, y = _arrays(a, b)
    if data_range <= 0:
        raise MetricError("data range must be positive")
    diff = x - y if mask is None else (x - y)[np.asarray(mask, bool)]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def _window_means(x, w):
    """Means over every fully contained ``w``-cube, via separable running sums."""
    for axis in range(x.ndim):
        c = np.cumsum(x, axis=axis)
        zero = np.zeros_like(np.take(c, [0], axis=axis))
        c = np.concatenate([zero, c], axis=axis)
        n = x.shape[axis]
        x = np.take(c, np.arange(w, n + 1), axis=axis) - np.take(c, np.arange(0, n - w + 1), axis=axis)
    return x / w**x.ndim


def ssim_map(a, b, data_range: float, window: int = 7, k1: float = 0.01, k2: float = 0.03):
    x, y = _arrays(a, b)
    if min(x.shape) < window:
        raise MetricError(f"volume {x.shape} smaller than the {window}^3 window")
    # centering keeps the running sums well conditioned
    shift = 0.5 * (x.mean() + y.mean())
    x, y = x - shift, y - shift
    n = window**x.ndim
    cov_norm = n / (n - 1.0)
    mx, my = _window_means(x, window), _window_means(y, window)
    vx = cov_norm * (_window_means(x * x, window) - mx * mx)
    vy = cov_norm * (_window_means(y * y, window) - my * my)
    vxy = cov_norm * (_window_means(x * y, window) - mx * my)
    mx, my = mx + shift, my + shift
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    num = (2 * mx * my + c1) * (2 * vxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return num / den


def ssim(a, b, data_range: float, window: int = 7) -> float:
    """Mean structural similarity over all 7^3 windows inside the volume."""
    return float(np.mean(ssim_map(a, b, data_range, window)))


def dice(a, b, threshold: float = DICE_THRESHOLD) -> float:
    x, y = _arrays(a, b)
    ma, mb = x > threshold, y > threshold
    total = int(ma.sum()) + int(mb.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(ma, mb).sum()) / total


def overall(psnr_db: float, ssim_value: float, dice_value: float) -> float:
    """Mean of percentage-scaled PSNR (capped at 40 dB), SSIM and Dice."""
    p = min(psnr_db, PSNR_CAP) / PSNR_CAP * 100.0
    return (p + 100.0 * ssim_value + 100.0 * dice_value) / 3.0


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    dice: float
    overall: float
    threshold: float
    data_range: float

    FIELDS = ("psnr", "ssim", "dice", "overall", "threshold", "data_range")

    def to_text(self) -> str:
        return "".join(f"{k}: {_fmt(getattr(self, k))}\n" for k in self.FIELDS)

    @classmethod
    def from_text(cls, text: str) -> "MetricReport":
        values = {}
        for line in text.splitlines():
            if line.strip():
                k, _, v = line.partition(":")
                values[k.strip()] = float(v)
        return cls(**{k: values[k] for k in cls.FIELDS})

    def csv_row(self, **prefix) -> dict:
        row = dict(prefix)
        row.update({k: _fmt(v) for k, v in asdict(self).items()})
        return row


def _fmt(v: float) -> str:
    return "inf" if v == math.inf else repr(float(v))


def evaluate(recon, truth, threshold: float = DICE_THRESHOLD, mask=None) -> MetricReport:
    """Compare a reconstruction against ground truth; PSNR range comes from the truth."""
    rng = data_range(truth)
    p = psnr(recon, truth, rng, mask=mask)
    s = ssim(recon, truth, rng)
    d = dice(recon, truth, threshold)
    return MetricReport(p, s, d, overall(p, s, d), threshold, rng)
