"""Manhattan room-layout toolkit: data model, synthetic data, degeneration
augmentation, loss kernels with checked gradients, a toy query segmenter and
layout metrics."""

from .core import (
    BACKGROUND,
    DegenerationDAG,
    PolyLayout,
    RoomTaxonomy,
    RoomType,
    Surface,
    ValidationReport,
    build_dag,
    default_taxonomy,
    surfaces_of,
    validate_layout,
)
from .degen import AugmentConfig, RetainMask, Sample, augment_sample, degenerate, degenerate_mask, hflip, photometric_jitter
from .gradcheck import CheckReport, gradcheck
from .losses import (
    ContrastiveConfig,
    EdgeLossConfig,
    LossBundle,
    LossWeights,
    bce_mask_loss,
    ce_loss,
    contrastive_loss,
    dice_loss,
    edge_loss,
    geo_loss,
    smoothness_loss,
    surface_loss,
    total_loss,
)
from .metrics import EvalReport, corner_error, evaluate, extract_corners, pixel_error
from .synth import DatasetManifest, SynthConfig, gen_dataset, rasterize, render_image, sample_layout

__version__ = "0.1.0"
