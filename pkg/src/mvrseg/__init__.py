"""Multi-view readout segmentation over precomputed frozen-feature grids.

Probes (small MLP readouts) are trained per input resolution on patch
feature grids; inference averages flip views, routes between resolution
branches by entropy, optionally refines with a dense CRF, smooths
volumes along z, and reports Dice/IoU/HD95 under fixed conventions.
"""

from .crf import CrfConfig, crf_exact_step, densecrf_refine
from .formats import (
    CorruptHeaderError,
    FeatureFileError,
    TruncatedPayloadError,
    UnsupportedVersionError,
    read_feature_stack,
    read_probe_params,
    write_feature_stack,
    write_probe_params,
)
from .fusion import FusionConfig, binary_entropy, fuse_entropy_guided, threshold
from .grid import (
    FeatureStack,
    apply_sigmoid,
    resize_bilinear,
    resize_nearest,
)
from .metrics import (
    AggregateReport,
    CaseMetrics,
    aggregate,
    dice,
    hd95,
    iou,
    to_metric_grid,
    volumetric_metrics,
)
from .pipeline import PipelineConfig, load_config, run_full_pipeline
from .probe import (
    ProbeParams,
    TrainConfig,
    loss_bce_dice,
    loss_gradient,
    predict_probability,
    probe_forward,
    train_probes,
)
from .views import (
    MissingProbeError,
    MissingViewError,
    ViewSpec,
    apply_inverse_transform,
    predict_view,
    tta_average,
)
from .volumetric import ZSmoothConfig, gaussian_kernel_1d, smooth_z, volume_threshold

__version__ = "0.1.0"
