"""End-to-end runs built from :class:`~oral_nexf.config.Settings`."""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .config import Settings
from .field import FieldModel
from .geometry import generate_rays
from .metrics import MetricReport, evaluate
from .rendering import ProjectionImage, project_volume
from .training import TrainResult, reconstruct, train
from .volume import Volume, generate_phantom

ABLATIONS = {
    "M": "ablation.single_head",
    "D": "ablation.fixed_sampling",
    "S": "ablation.beer_lambert",
}


def rays_for(settings: Settings):
    return generate_rays(settings.curve(), settings.get("geometry.segments"), settings.angles(),
                         pitch=settings.pitch())


def simulate(settings: Settings, volume: Volume, threads: int = 1):
    """Rays and the detector image they produce on ``volume``."""
    rays = rays_for(settings)
    params = settings.train_config().render_params()
    image = project_volume(volume, rays, settings.get("render.gt_rate"), params, threads=threads)
    return rays, image


def variant(settings: Settings, letters: str = "") -> Settings:
    """Copy of ``settings`` with the named ablation switches turned on."""
    out = copy.deepcopy(settings)
    for letter in letters:
        try:
            out.set(ABLATIONS[letter], True)
        except KeyError:
            raise ValueError(f"unknown ablation {letter!r}; expected some of M, D, S") from None
    return out


@dataclass
class RunOutcome:
    result: TrainResult
    recon: Volume
    report: MetricReport
    image: ProjectionImage

    @property
    def model(self) -> FieldModel:
        return self.result.model


def run(settings: Settings, volume: Volume | None = None, threads: int = 1, callback=None) -> RunOutcome:
    """Phantom (unless given) -> simulated PX -> training -> reconstruction -> metrics."""
    if volume is None:
        volume = generate_phantom(settings.phantom_spec(), settings.dims)
    rays, image = simulate(settings, volume, threads)
    result = train(volume, rays, image, settings.train_config(), threads=threads, callback=callback)
    recon = reconstruct(result.model, volume.dims, spacing=volume.spacing)
    report = evaluate(recon, volume, settings.get("evaluate.threshold"))
    return RunOutcome(result, recon, report, image)
