"""Depth-geometry pipeline for railway ballast sufficiency assessment.

Corrects spatially varying depth-sensor bias with RANSAC-fitted polynomial
surfaces smoothed over time, reconstructs sleeper-aligned reference planes
inside rotated bounding boxes, and classifies each ballast region as
sufficient or insufficient from the depth residuals.
"""

from .model import (
    BOX_MODE_AABB,
    BOX_MODE_RBB,
    BiasParams,
    CoordNorm,
    DepthFrame,
    LABEL_INDETERMINATE,
    LABEL_INSUFFICIENT,
    LABEL_SUFFICIENT,
    PipelineConfig,
    PixelGrid,
    RBox,
    RegionDetection,
    RegionVerdict,
    SleeperSamples,
    rbox_corners,
    validate_frame,
    verdict_label,
)
from .maskgeom import (
    aabb_as_rbox,
    clean_mask,
    filter_detections,
    from_local,
    min_area_rbox,
    sample_bilinear,
    to_local,
)
from .sleepers import extract_samples, fallback_line, mad_filter, midline_segment, order_boxes
from .bias import (
    EmaState,
    apply_correction,
    design_row,
    ema_update,
    eval_bias,
    ls_fit,
    ransac_fit,
)
from .sufficiency import (
    classify_region,
    edge_gap_criterion,
    edge_profiles,
    global_criterion,
    reference_plane,
    residual_map,
)
from .synth import BaySpec, SceneSpec, perturbation_sweep, render_scene
from .evaluation import EvalReport, MethodSpec, compare_methods, f1_from_pr, score
from .pipeline import FrameResult, process_frame, run_frames

__version__ = "0.1.0"
