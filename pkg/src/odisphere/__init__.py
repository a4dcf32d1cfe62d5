"""odisphere: saliency-map estimation and evaluation for omni-directional images.

The pipeline extracts overlapping undistorted tangent patches from an ERP
image at a grid of viewing directions and several angles of view, predicts
per-patch saliency with a pluggable 2D backend, applies learnable
elevation-conditioned bias grids, fuses the scales with pixel-wise attention,
reprojects to ERP with overlap averaging, and evaluates with sphere-uniform
metrics.
"""

from .config import PipelineConfig
from .errors import ConfigError, DegenerateInputError, FormatError, OdisphereError
from .geometry import (
    Direction,
    ViewFrustum,
    erp_to_sphere,
    focal_length,
    patch_to_sphere,
    solid_angle_weights,
    sphere_to_erp,
    sphere_to_patch,
    tangent_basis,
)
from .learning import TrainConfig, kld_loss, rmsprop_step, train_attention, train_bias
from .metrics import (
    FixationSet,
    MetricReport,
    auc_judd,
    cc,
    evaluate,
    kld_metric,
    nss,
    nss_by_elevation,
    read_fixations,
)
from .multiscale import (
    AttentionParams,
    ScaleStack,
    attention_forward,
    crop_resize_to_smallest,
    init_attention_params,
    integrate,
)
from .patching import (
    DirectionGrid,
    Patch,
    extract_patch,
    generate_view_directions,
    reproject_average,
)
from .pfm import read_pfm, write_pfm
from .pipeline import PipelineResult, run_pipeline
from .saliency import (
    BiasGrid,
    ContrastBackend,
    FileBackend,
    SaliencyBackend,
    apply_bias,
    l1_normalize,
    select_bias_channel,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
