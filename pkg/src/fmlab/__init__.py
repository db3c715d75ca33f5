"""fmlab: a desk-scale flow matching laboratory.

Interpolant schedules and velocity targets, deterministic ODE sampling with
classifier-free guidance, small trainable velocity fields with manual
gradients, mask-conditioned feature modulation layers, binary-mask algebra,
distribution/segmentation metrics, and a CLI that executes mask/image
synthesis policies over raster files.
"""

from . import conditioning, manifest, masks, metrics, neural, rasters, sampler, schedules, toys
from .errors import DivergenceError, DomainError, NumericError, ShapeError, TrainingError

__version__ = "0.1.0"

__all__ = [
    "conditioning",
    "manifest",
    "masks",
    "metrics",
    "neural",
    "rasters",
    "sampler",
    "schedules",
    "toys",
    "DivergenceError",
    "DomainError",
    "NumericError",
    "ShapeError",
    "TrainingError",
]
