"""Training: batched ray loss with hand-written backward pass, Adam, reconstruction."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .field import MULTI, SINGLE, EncoderConfig, FieldModel, ModelConfig, encode, query_columns
from .rendering import AIR, MU_NORMALIZER, SOFT, BEER_LAMBERT, ProjectionImage, RenderParams
from .sampling import FIXED, SamplerConfig, draw_rate, sample_ts, usable_rate
from .volume import Volume, voxel_centers

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 100_000
    batch_rays: int = 64
    lr_initial: float = 1e-3
    lr_after: float = 1e-4
    lr_switch: int = 20_000
    n_layers: int = 12
    width: int = 256
    n_freqs: int = 32
    include_input: bool = True
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    render: RenderParams = field(default_factory=RenderParams)
    # ablations: M = single-head 3D field, D = fixed Ns, S = Beer-Lambert law
    single_head: bool = False
    fixed_sampling: bool = False
    beer_lambert: bool = False
    rows_per_ray: int = 0  # single-head only; 0 supervises every detector row
    chunk_rays: int = 16
    log_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.iterations <= 0 or self.batch_rays < 1:
            raise TrainingError("iterations and batch size must be positive")
        if self.lr_initial <= 0 or self.lr_after <= 0:
            raise TrainingError("learning rates must be positive")
        if not 0 <= self.lr_switch <= self.iterations:
            raise TrainingError("lr switch iteration must lie within the run")
        if self.chunk_rays < 1:
            raise TrainingError("chunk size must be positive")

    def sampler_config(self) -> SamplerConfig:
        if self.fixed_sampling:
            return replace(self.sampler, mode=FIXED)
        return self.sampler

    def render_params(self) -> RenderParams:
        if self.beer_lambert:
            return replace(self.render, law=BEER_LAMBERT)
        return self.render

    def model_config(self, heads: int) -> ModelConfig:
        enc = EncoderConfig(self.n_freqs, self.include_input)
        kw = dict(n_layers=self.n_layers, width=self.width, encoder=enc, seed=self.seed)
        if self.single_head:
            return ModelConfig.single_head(**kw)
        return ModelConfig(heads=heads, **kw)


def learning_rate(config: TrainConfig, iteration: int) -> float:
    """Step schedule; ``iteration`` is 0-based."""
    return config.lr_initial if iteration < config.lr_switch else config.lr_after


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float, iteration: int | None = None):
    """In-place Adam update with bias correction; returns ``(params, state)``."""
    if len(params) != len(grads):
        raise TrainingError("parameter/gradient count mismatch")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise TrainingError(f"gradient block {i} has shape {g.shape}, expected {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter block {i} at iteration {iteration}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    """Flattened sample points grouped into pixels-sharing runs.

    Each group is one ray (multi-head: all rows at once) or one (ray, row)
    pair (single-head).  ``targets[g]`` holds the detector values of group g.
    """

    points: np.ndarray  # (n, 2) or (n, 3)
    starts: np.ndarray  # group start offsets into points
    rates: np.ndarray  # Ns per group
    targets: np.ndarray  # (groups, columns)


def build_batch(model: FieldModel, rays, gt_columns, rates, rows=None) -> Batch:
    """Assemble the sample points of ``rays`` at the given ``rates``.

    ``gt_columns[r]`` is the full detector column of ray r; ``rows[r]`` selects
    the supervised rows in single-head mode.
    """
    pts, starts, group_rates, targets = [], [], [], []
    n = 0
    single = model.config.mode == SINGLE
    for r, (ray, Ns) in enumerate(zip(rays, rates)):
        xy = ray.at(sample_ts(ray, Ns))
        if len(xy) == 0:
            raise TrainingError(f"ray of segment {ray.segment} has no samples at Ns={Ns}")
        column = np.asarray(gt_columns[r], dtype=np.float64)
        if not single:
            pts.append(xy)
            starts.append(n)
            n += len(xy)
            group_rates.append(Ns)
            targets.append(column)
            continue
        nz = len(column)
        z = voxel_centers(nz)
        for j in (range(nz) if rows is None else rows[r]):
            pts.append(np.column_stack([xy, np.full(len(xy), z[j])]))
            starts.append(n)
            n += len(xy)
            group_rates.append(Ns)
            targets.append(column[j:j + 1])
    return Batch(np.concatenate(pts), np.asarray(starts), np.asarray(group_rates, np.float64),
                 np.stack(targets))


def render_groups(values, batch: Batch, params: RenderParams):
    """Render every group; returns ``(pixels, aux)`` where aux feeds the backward pass."""
    sizes = np.diff(np.append(batch.starts, len(values)))
    if params.law == SOFT:
        z = (values - params.C) / params.S
        m = np.maximum.reduceat(z, batch.starts, axis=0)
        e = np.exp(z - np.repeat(m, sizes, axis=0))
        s = np.add.reduceat(e, batch.starts, axis=0)
        pixels = params.S * (m + np.log(s) - np.log(batch.rates)[:, None])
        return pixels, (sizes, e, s)
    step = 1.0 / batch.rates
    mu = np.maximum(values - AIR, 0.0) / MU_NORMALIZER
    pixels = np.add.reduceat(mu, batch.starts, axis=0) * step[:, None]
    return pixels, (sizes, step)


def render_backward(values, batch: Batch, params: RenderParams, aux, d_pixels):
    if params.law == SOFT:
        sizes, e, s = aux
        # d/dV of S*logsumexp((V-C)/S) is the softmax weight of V within its group
        return np.repeat(d_pixels / s, sizes, axis=0) * e
    sizes, step = aux
    active = (values > AIR) / MU_NORMALIZER
    return np.repeat(d_pixels * step[:, None], sizes, axis=0) * active


def batch_loss(model: FieldModel, batch: Batch, params: RenderParams, with_grad: bool = True,
               normalizer: int | None = None):
    """Squared detector error averaged over pixels, and its parameter gradients.

    ``normalizer`` overrides the pixel count used for averaging, so that
    chunks of one batch can be summed into the full-batch gradient.
    """
    tape = [] if with_grad else None
    values = model.forward(encode(batch.points, model.config.encoder), tape)
    pixels, aux = render_groups(values, batch, params)
    residual = pixels - batch.targets
    count = residual.size if normalizer is None else normalizer
    loss = float(np.sum(residual * residual) / count)
    if not with_grad:
        return loss, None
    d_values = render_backward(values, batch, params, aux, 2.0 * residual / count)
    return loss, model.backward(tape, d_values)


def ray_loss(model: FieldModel, ray, gt_column, Ns: float, params: RenderParams = RenderParams()):
    """Loss and gradients for a single ray against its detector column."""
    return batch_loss(model, build_batch(model, [ray], [gt_column], [Ns]), params)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    model: FieldModel
    losses: np.ndarray
    lrs: np.ndarray


def _rows_per_group(model: FieldModel, rows) -> int:
    return model.config.heads if rows is None else len(rows)


def train(volume_or_heads, rays, image: ProjectionImage, config: TrainConfig, threads: int = 1,
          callback=None) -> TrainResult:
    """Fit a field to the detector image ``image`` (one column per ray).

    ``volume_or_heads`` fixes the head count: a Volume (its nz) or an integer.
    Every random draw comes from a generator keyed on ``(seed, iteration)``;
    the batch is split into fixed chunks whose gradients are summed in order,
    so results do not depend on ``threads``.
    """
    heads = volume_or_heads.dims[2] if isinstance(volume_or_heads, Volume) else int(volume_or_heads)
    if image.height != heads or image.width != len(rays):
        raise TrainingError(f"image {image.width}x{image.height} does not match "
                            f"{len(rays)} rays x {heads} rows")
    model = FieldModel(config.model_config(heads))
    state = AdamState.zeros_like(model.params)
    sampler = config.sampler_config()
    params = config.render_params()
    columns = image.pixels.T
    single = model.config.mode == SINGLE
    losses = np.empty(config.iterations)
    lrs = np.empty(config.iterations)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        for it in range(config.iterations):
            rng = np.random.default_rng([config.seed, it])
            picks = rng.integers(0, len(rays), size=config.batch_rays)
            batch_rays = [rays[i] for i in picks]
            rates = [usable_rate(r, float(draw_rate(sampler, rng)), sampler, rng) for r in batch_rays]
            rows = None
            if single and 0 < config.rows_per_ray < heads:
                rows = [np.sort(rng.choice(heads, config.rows_per_ray, replace=False))
                        for _ in batch_rays]
            n_pixels = config.batch_rays * (heads if rows is None else config.rows_per_ray)

            def work(lo):
                hi = lo + config.chunk_rays
                batch = build_batch(model, batch_rays[lo:hi], columns[picks[lo:hi]], rates[lo:hi],
                                    None if rows is None else rows[lo:hi])
                return batch_loss(model, batch, params, normalizer=n_pixels)

            starts = range(0, config.batch_rays, config.chunk_rays)
            parts = list(pool.map(work, starts)) if pool else [work(s) for s in starts]
            loss = sum(p[0] for p in parts)
            grads = [sum(g) for g in zip(*(p[1] for p in parts))]
            if not math.isfinite(loss):
                raise TrainingError(f"loss became non-finite at iteration {it}")
            lr = learning_rate(config, it)
            adam_step(model.params, grads, state, lr, iteration=it)
            losses[it], lrs[it] = loss, lr
            if config.log_every and (it % config.log_every == 0 or it == config.iterations - 1):
                log.info("iter %d loss %.6g lr %.1e", it, loss, lr)
                if callback is not None:
                    callback(it, loss, lr, model)
    finally:
        if pool:
            pool.shutdown()
    return TrainResult(model, losses, lrs)


def reconstruct(model: FieldModel, dims, chunk: int = 4096, spacing=(1.0, 1.0, 1.0)) -> Volume:
    """Evaluate the field on every axial voxel center and stack the columns along z."""
    nx, ny, nz = dims
    if model.config.mode == MULTI and model.config.heads != nz:
        raise TrainingError(f"model has {model.config.heads} heads but nz={nz}")
    xx, yy = np.meshgrid(voxel_centers(nx), voxel_centers(ny))
    xy = np.column_stack([xx.ravel(), yy.ravel()])
    cols = np.concatenate([query_columns(model, xy[i:i + chunk], nz)
                           for i in range(0, len(xy), chunk)])
    return Volume(cols.T.reshape(nz, ny, nx), spacing)


def smoothed(losses, window: int = 500) -> np.ndarray:
    """Means over consecutive non-overlapping windows."""
    n = len(losses) // window
    return np.asarray(losses[: n * window]).reshape(n, window).mean(axis=1)
