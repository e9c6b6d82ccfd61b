"""Neural X-ray field: frequency encoder and multi-head residual MLP.

A multi-head model maps an axial ``(x, y)`` to one intensity per z-slice; the
single-head variant maps ``(x, y, z)`` to one intensity.  Forward passes
record a tape of activations that :meth:`FieldModel.backward` replays.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .volume import read_header, voxel_centers

MULTI = "multi"
SINGLE = "single"


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    n_freqs: int = 32
    include_input: bool = True
    input_dim: int = 2

    def __post_init__(self):
        if self.n_freqs < 1:
            raise FieldError("need at least one frequency band")

    @property
    def out_dim(self) -> int:
        return self.input_dim * (2 * self.n_freqs + int(self.include_input))


def encode(positions, config: EncoderConfig) -> np.ndarray:
    """``[p, sin(2^k pi p_0), cos(2^k pi p_0), ..., sin(2^k pi p_d), ...]`` per row.

    For each coordinate the bands are interleaved sin/cos for k = 0 .. L-1.
    """
    p = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if p.shape[-1] != config.input_dim:
        raise FieldError(f"expected {config.input_dim}D positions, got {p.shape[-1]}D")
    if np.any(np.abs(p) > 1.0 + 1e-6):
        raise FieldError("positions must be normalized to [-1, 1]")
    freqs = np.pi * 2.0 ** np.arange(config.n_freqs)
    angles = p[:, :, None] * freqs  # (n, dim, L)
    bands = np.stack([np.sin(angles), np.cos(angles)], axis=-1).reshape(len(p), -1)
    if config.include_input:
        return np.concatenate([p, bands], axis=1)
    return bands


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 12
    width: int = 256
    heads: int = 160
    mode: str = MULTI
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    output_scale: float = 1000.0
    output_offset: float = 0.0
    head_init_scale: float = 1e-2
    seed: int = 0

    def __post_init__(self):
        if self.n_layers < 2:
            raise FieldError("need at least an input layer and an output head")
        if self.mode not in (MULTI, SINGLE):
            raise FieldError(f"unknown head mode {self.mode!r}")
        if self.mode == SINGLE and self.heads != 1:
            raise FieldError("single-head mode has exactly one output")
        expected_dim = 2 if self.mode == MULTI else 3
        if self.encoder.input_dim != expected_dim:
            raise FieldError(f"{self.mode}-head mode takes {expected_dim}D coordinates")

    @classmethod
    def single_head(cls, **kw) -> "ModelConfig":
        enc = kw.pop("encoder", EncoderConfig())
        enc = EncoderConfig(enc.n_freqs, enc.include_input, input_dim=3)
        kw.update(heads=1, mode=SINGLE)
        return cls(encoder=enc, **kw)


class FieldModel:
    """Residual MLP: input layer, skip-added pairs of hidden layers, linear head.

    ``params`` is a flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
    ``(fan_in, fan_out)``.  Hidden layers ``1 .. n_layers-2`` are grouped in
    pairs ``h <- h + relu(relu(h W_a + b_a) W_b + b_b)``; an odd leftover
    layer is a plain ``relu(h W + b)``.
    """

    def __init__(self, config: ModelConfig, params=None):
        self.config = config
        self.params = self._init_params() if params is None else [np.asarray(p, np.float64) for p in params]
        shapes = [p.shape for p in self.params]
        if shapes != self.param_shapes():
            raise FieldError(f"parameter shapes {shapes} do not match {self.param_shapes()}")

    def layer_sizes(self) -> list[tuple[int, int]]:
        c = self.config
        sizes = [(c.encoder.out_dim, c.width)]
        sizes += [(c.width, c.width)] * (c.n_layers - 2)
        sizes.append((c.width, c.heads))
        return sizes

    def param_shapes(self) -> list[tuple[int, ...]]:
        out = []
        for fan_in, fan_out in self.layer_sizes():
            out += [(fan_in, fan_out), (fan_out,)]
        return out

    def _init_params(self) -> list[np.ndarray]:
        rng = np.random.default_rng(self.config.seed)
        sizes = self.layer_sizes()
        params = []
        for i, (fan_in, fan_out) in enumerate(sizes):
            bound = math.sqrt(6.0 / fan_in)
            if i == len(sizes) - 1:
                bound *= self.config.head_init_scale
            params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return params

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def _blocks(self):
        hidden = list(range(1, self.config.n_layers - 1))
        return [hidden[i:i + 2] for i in range(0, len(hidden), 2)]

    def forward(self, x, tape: list | None = None) -> np.ndarray:
        """Intensities for encoded inputs ``x`` of shape ``(n, encoder.out_dim)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.encoder.out_dim:
            raise FieldError(f"encoded input must have shape (n, {self.config.encoder.out_dim})")
        P = self.params
        a = x @ P[0] + P[1]
        h = np.maximum(a, 0.0)
        if tape is not None:
            tape.append((x, a))
        for block in self._blocks():
            h_in = h
            acts = []
            for l in block:
                a = h @ P[2 * l] + P[2 * l + 1]
                acts.append((h, a))
                h = np.maximum(a, 0.0)
            if len(block) == 2:
                h = h_in + h
            if tape is not None:
                tape.append(acts)
        out = h @ P[-2] + P[-1]
        if tape is not None:
            tape.append(h)
        return self.config.output_offset + self.config.output_scale * out

    def backward(self, tape: list, grad_out) -> list[np.ndarray]:
        """Parameter gradients given dLoss/dOutput, replaying ``tape``."""
        P = self.params
        grads = [None] * len(P)
        g = np.asarray(grad_out, dtype=np.float64) * self.config.output_scale
        h = tape[-1]
        grads[-2] = h.T @ g
        grads[-1] = g.sum(axis=0)
        dh = g @ P[-2].T
        for block, acts in zip(reversed(self._blocks()), reversed(tape[1:-1])):
            skip = dh if len(block) == 2 else 0.0
            d = dh
            for l, (h_prev, a) in zip(reversed(block), reversed(acts)):
                da = d * (a > 0)
                grads[2 * l] = h_prev.T @ da
                grads[2 * l + 1] = da.sum(axis=0)
                d = da @ P[2 * l].T
            dh = d + skip
        x, a = tape[0]
        da = dh * (a > 0)
        grads[0] = x.T @ da
        grads[1] = da.sum(axis=0)
        return grads

    def __call__(self, positions) -> np.ndarray:
        return self.forward(encode(positions, self.config.encoder))


def field_forward(model: FieldModel, encoded) -> np.ndarray:
    return model.forward(np.atleast_2d(encoded))


def query_columns(model: FieldModel, xy, nz: int | None = None) -> np.ndarray:
    """Intensity columns ``(n, nz)`` at axial positions ``xy``; column index j is z-slice j.

    Multi-head models answer with one pass; single-head models are queried at
    every slice center and the results assembled into the same layout.
    """
    xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
    c = model.config
    if c.mode == MULTI:
        if nz is not None and nz != c.heads:
            raise FieldError(f"model has {c.heads} heads, asked for {nz} slices")
        return model(xy)
    if nz is None:
        raise FieldError("single-head queries need the slice count")
    z = voxel_centers(nz)
    pts = np.concatenate([np.repeat(xy, nz, axis=0), np.tile(z, len(xy))[:, None]], axis=1)
    return model(pts).reshape(len(xy), nz)


def field_query_column(model: FieldModel, xy) -> np.ndarray:
    if model.config.mode != MULTI:
        raise FieldError("column queries need a multi-head model")
    return query_columns(model, xy)[0]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def config_to_dict(config: ModelConfig) -> dict:
    return asdict(config)


def config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    d["encoder"] = EncoderConfig(**d["encoder"])
    return ModelConfig(**d)


def save_checkpoint(model: FieldModel, path, **extra) -> None:
    shapes = ";".join("x".join(str(n) for n in s) for s in model.param_shapes())
    header = [
        "format: nexf-checkpoint-1",
        f"config: {json.dumps(config_to_dict(model.config), sort_keys=True)}",
        f"shapes: {shapes}",
        "dtype: f32le",
    ]
    header += [f"{k}: {v}" for k, v in extra.items()]
    payload = np.concatenate([p.ravel() for p in model.params]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n\n").encode("ascii"))
        fh.write(payload.tobytes())


def load_checkpoint(path) -> FieldModel:
    header, payload = read_header(Path(path).read_bytes())
    if header.get("dtype") != "f32le" or "config" not in header:
        raise FieldError("not a field checkpoint")
    config = config_from_dict(json.loads(header["config"]))
    model = FieldModel(config)
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if values.size != model.n_params:
        raise FieldError(f"checkpoint holds {values.size} values, model needs {model.n_params}")
    params, pos = [], 0
    for shape in model.param_shapes():
        n = int(np.prod(shape))
        params.append(values[pos:pos + n].reshape(shape))
        pos += n
    return FieldModel(config, params)
