"""Neural X-ray field reconstruction of oral structures from panoramic projections."""

__version__ = "0.1.0"

from .field import EncoderConfig, FieldModel, ModelConfig, encode, field_forward, field_query_column
from .geometry import FocalCurve, Ray, curve_point, generate_rays, segment_curve
from .metrics import MetricReport, dice, evaluate, overall, psnr, ssim
from .rendering import (
    ProjectionImage,
    RenderParams,
    project_volume,
    render_beer_lambert,
    render_soft,
    trilinear,
)
from .sampling import SamplerConfig, draw_rate, sample_positions
from .training import AdamState, TrainConfig, adam_step, ray_loss, reconstruct, train
from .volume import PhantomSpec, Volume, generate_phantom, load_volume, save_volume
