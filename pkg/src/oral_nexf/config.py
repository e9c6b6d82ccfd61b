"""Flat ``key = value`` configuration files with ``[section]`` headers.

Unlisted keys keep the paper-scale defaults declared in :data:`SCHEMA`.  A
file may be one of the shipped profiles (``paper``, ``desk``) or a path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .field import EncoderConfig
from .geometry import FocalCurve, fan_angles
from .rendering import LAWS, RenderParams
from .sampling import SamplerConfig
from .training import TrainConfig
from .volume import PhantomSpec

PROFILES = ("paper", "desk")
DEFAULT_PROFILE = "desk"


class ConfigError(ValueError):
    def __init__(self, message, line=None, source=None):
        where = f"{source or '<config>'}:{line}: " if line else ""
        super().__init__(where + message)
        self.line = line


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def parse_dims(text) -> tuple[int, int, int]:
    parts = str(text).lower().replace("x", " ").split()
    if len(parts) != 3:
        raise ValueError(f"dims must look like 64x64x32, got {text!r}")
    return tuple(int(p) for p in parts)


def _law(text):
    if text not in LAWS:
        raise ValueError(f"law must be one of {LAWS}")
    return text


def _mode(text):
    if text not in ("dynamic", "fixed"):
        raise ValueError("mode must be dynamic or fixed")
    return text


# section -> key -> (parser, paper-scale default)
SCHEMA = {
    "volume": {
        "dims": (parse_dims, (288, 256, 160)),
    },
    "phantom": {
        "tooth_count": (int, 8),
        "jaw_intensity": (float, 1400.0),
        "tooth_intensity": (float, 2200.0),
        "soft_intensity": (float, 300.0),
        "background_intensity": (float, -1000.0),
        "jaw_halfwidth": (float, 0.1),
        "soft_halfwidth": (float, 0.22),
        "seed": (int, 0),
    },
    "curve": {
        "alpha": (float, 2.0),
        "beta": (float, 2.0),
        "scale": (_floats, (0.75, 1.1)),
        "offset": (_floats, (0.0, -0.55)),
    },
    "geometry": {
        "segments": (int, 576),
        "fan": (int, 1),
    },
    "render": {
        "C": (float, 1000.0),
        "S": (float, 1200.0),
        "law": (_law, "soft"),
        "gt_rate": (float, 1.0),
    },
    "sampler": {
        "rate_min": (float, 0.25),
        "rate_max": (float, 1.25),
        "mode": (_mode, "dynamic"),
        "fixed_rate": (float, 1.0),
    },
    "model": {
        "layers": (int, 12),
        "width": (int, 256),
        "freqs": (int, 32),
        "include_input": (_bool, True),
    },
    "train": {
        "iterations": (int, 100_000),
        "batch_rays": (int, 64),
        "lr_initial": (float, 1e-3),
        "lr_after": (float, 1e-4),
        "lr_switch": (int, 20_000),
        "rows_per_ray": (int, 0),
        "chunk_rays": (int, 16),
        "log_every": (int, 100),
        "checkpoint_every": (int, 0),
        "seed": (int, 0),
    },
    "ablation": {
        "single_head": (_bool, False),
        "fixed_sampling": (_bool, False),
        "beer_lambert": (_bool, False),
    },
    "evaluate": {
        "threshold": (float, 1000.0),
    },
}

# sections that may appear in a file but carry no settings (run manifests)
PASSIVE_SECTIONS = ("run",)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if len(value) == 3 and all(isinstance(v, int) for v in value):
            return "x".join(str(v) for v in value)
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class Settings:
    values: dict

    @classmethod
    def defaults(cls) -> "Settings":
        return cls({s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()})

    def get(self, dotted: str):
        section, key = dotted.split(".")
        return self.values[section][key]

    def set(self, dotted: str, value) -> None:
        section, key = dotted.split(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown setting {dotted}")
        parser = SCHEMA[section][key][0]
        self.values[section][key] = parser(value) if isinstance(value, str) else value

    def to_text(self) -> str:
        out = []
        for section, keys in self.values.items():
            out.append(f"[{section}]")
            out += [f"{k} = {_format(v)}" for k, v in keys.items()]
            out.append("")
        return "\n".join(out)

    # -- builders ---------------------------------------------------------

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.get("volume.dims")

    def curve(self) -> FocalCurve:
        c = self.values["curve"]
        return FocalCurve(c["alpha"], c["beta"], tuple(c["scale"]), tuple(c["offset"]))

    def phantom_spec(self) -> PhantomSpec:
        p = self.values["phantom"]
        return PhantomSpec(curve=self.curve(), **p)

    def angles(self) -> list[float]:
        return fan_angles(self.get("geometry.fan"))

    def pitch(self) -> float:
        nx, ny, _ = self.dims
        return 2.0 / max(nx, ny)

    def render_params(self) -> RenderParams:
        r = self.values["render"]
        return RenderParams(C=r["C"], S=r["S"], law=r["law"])

    def train_config(self) -> TrainConfig:
        t, m, s, a = (self.values[k] for k in ("train", "model", "sampler", "ablation"))
        return TrainConfig(
            iterations=t["iterations"],
            batch_rays=t["batch_rays"],
            lr_initial=t["lr_initial"],
            lr_after=t["lr_after"],
            lr_switch=t["lr_switch"],
            n_layers=m["layers"],
            width=m["width"],
            n_freqs=m["freqs"],
            include_input=m["include_input"],
            sampler=SamplerConfig(s["rate_min"], s["rate_max"], s["mode"], s["fixed_rate"], t["seed"]),
            render=self.render_params(),
            single_head=a["single_head"],
            fixed_sampling=a["fixed_sampling"],
            beer_lambert=a["beer_lambert"],
            rows_per_ray=t["rows_per_ray"],
            chunk_rays=t["chunk_rays"],
            log_every=t["log_every"],
            seed=t["seed"],
        )


def parse(text: str, base: Settings | None = None, source: str | None = None) -> Settings:
    settings = base if base is not None else Settings.defaults()
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw!r}", lineno, source)
            section = line[1:-1].strip()
            if section not in SCHEMA and section not in PASSIVE_SECTIONS:
                raise ConfigError(f"unknown section [{section}]", lineno, source)
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"expected 'key = value', got {raw!r}", lineno, source)
        if section is None:
            raise ConfigError(f"setting {key!r} outside any section", lineno, source)
        if section in PASSIVE_SECTIONS:
            continue
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno, source)
        try:
            settings.values[section][key] = SCHEMA[section][key][0](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}", lineno, source) from None
    validate(settings, source)
    return settings


def validate(settings: Settings, source=None) -> None:
    try:
        settings.phantom_spec()
        settings.render_params()
        settings.train_config()
        if len(settings.get("curve.scale")) != 2 or len(settings.get("curve.offset")) != 2:
            raise ValueError("curve scale and offset need two values")
        if settings.get("geometry.segments") < 2:
            raise ValueError("need at least 2 segments")
        if not settings.get("render.gt_rate") > 0 or not math.isfinite(settings.get("render.gt_rate")):
            raise ValueError("gt_rate must be positive")
    except ValueError as exc:
        raise ConfigError(str(exc), source=source) from None


def profile_text(name: str) -> str:
    return resources.files("oral_nexf").joinpath("profiles", f"{name}.cfg").read_text()


def load(path_or_profile: str | None = None) -> Settings:
    """Load a shipped profile by name or a config file by path (default: desk profile)."""
    name = path_or_profile or DEFAULT_PROFILE
    if name in PROFILES:
        return parse(profile_text(name), source=f"{name}.cfg")
    path = Path(name)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse(text, source=str(path))
