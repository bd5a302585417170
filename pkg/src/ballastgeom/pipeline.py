"""Per-frame pipeline fold: detections -> boxes -> sleeper fit -> correction -> verdicts.

Frames must be folded in manifest order because the bias coefficients are
smoothed temporally. Region classification within a frame is pure and may run
on a thread pool (capped by the BALLAST_GEOM_THREADS environment variable).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from . import bias as bias_mod
from . import maskgeom, sleepers, sufficiency
from .model import (
    BOX_MODE_RBB,
    BiasParams,
    CoordNorm,
    DepthFrame,
    LABEL_INDETERMINATE,
    PipelineConfig,
    PixelGrid,
    RBox,
    RegionDetection,
    RegionVerdict,
    validate_frame,
)

THREADS_ENV = "BALLAST_GEOM_THREADS"


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


@dataclass
class FrameResult:
    frame_id: int
    theta: Optional[BiasParams]  # smoothed coefficients applied to this frame
    theta_raw: Optional[BiasParams]
    fit_ok: bool
    sample_count: int
    inlier_count: int
    rms: Optional[float]
    verdicts: list
    norm: Optional[CoordNorm] = None
    corrected: Optional[DepthFrame] = None


def build_rbox(det: RegionDetection, grid: PixelGrid, cfg: PipelineConfig) -> RBox:
    """Region geometry per box mode; degenerate masks fall back to the AABB."""
    if cfg.box_mode == BOX_MODE_RBB and det.mask is not None:
        cleaned = maskgeom.clean_mask(det.mask, cfg.min_component_px)
        try:
            return maskgeom.min_area_rbox(cleaned)
        except maskgeom.DegenerateMaskError:
            pass
    return maskgeom.aabb_as_rbox(det, grid)


def sampling_segments(rboxes: list, grid: PixelGrid, cfg: PipelineConfig) -> list:
    """Sleeper sampling lines: midlines between adjacent boxes plus the
    offset fallback lines outside the first and last box."""
    if not rboxes:
        return []
    ordered = sleepers.order_boxes(rboxes)
    segments = []
    top = sleepers.fallback_line(ordered[0], "top", cfg.delta_w_px, grid)
    if top is not None:
        segments.append(top)
    for a, b in zip(ordered, ordered[1:]):
        try:
            segments.append(sleepers.midline_segment(a, b))
        except sleepers.NoOverlapError:
            continue
    bottom = sleepers.fallback_line(ordered[-1], "bottom", cfg.delta_w_px, grid)
    if bottom is not None:
        segments.append(bottom)
    return segments


def _indeterminate_verdict(det: RegionDetection, box: RBox) -> RegionVerdict:
    return RegionVerdict(
        region_id=det.region_id,
        rho=None,
        gamma_max=None,
        c1_fired=None,
        c2_fired=None,
        cy_fired=False,
        label=LABEL_INDETERMINATE,
        rbox=box,
    )


def process_frame(
    frame_id: int,
    raw: DepthFrame,
    detections: list,
    cfg: PipelineConfig,
    ema: bias_mod.EmaState,
    keep_corrected: bool = False,
) -> FrameResult:
    violations = validate_frame(raw)
    if violations:
        raise ValueError(f"frame {frame_id}: invalid depth frame: {'; '.join(violations)}")
    grid = raw.grid
    norm = CoordNorm.for_grid(grid)

    kept = maskgeom.filter_detections(detections, grid, cfg)
    rboxes = [build_rbox(d, grid, cfg) for d in kept]

    theta_raw: Optional[BiasParams] = None
    inlier_count = 0
    sample_count = 0
    rms: Optional[float] = None
    try:
        segments = sampling_segments(rboxes, grid, cfg)
        samples = sleepers.extract_samples(raw, segments)
        filtered = sleepers.mad_filter(samples, cfg.tau_mad)
        sample_count = len(filtered)
        rng = np.random.default_rng([cfg.rng_seed, frame_id])
        theta_raw, inliers = bias_mod.ransac_fit(filtered, cfg, rng, norm)
        inlier_count = int(inliers.sum())
        resid = filtered.z[inliers] - bias_mod.eval_bias(theta_raw, filtered.x[inliers], filtered.y[inliers])
        rms = float(np.sqrt(np.mean(resid * resid)))
    except (
        sleepers.EmptySamplesError,
        sleepers.TooFewSamplesError,
        bias_mod.FitFailedError,
        bias_mod.DegenerateGeometryError,
    ):
        theta_raw = None

    if theta_raw is not None:
        smoothed = bias_mod.ema_update(ema, theta_raw, cfg.lambda_ema)
    else:
        smoothed = ema.theta_prev  # reuse the previous frame's coefficients

    if smoothed is not None:
        corrected = bias_mod.apply_correction(raw, smoothed)
        n_workers = worker_count()
        if n_workers > 1 and len(kept) > 1:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                verdicts = list(
                    pool.map(lambda db: sufficiency.classify_region(corrected, db[0], db[1], cfg), zip(kept, rboxes))
                )
        else:
            verdicts = [sufficiency.classify_region(corrected, d, b, cfg) for d, b in zip(kept, rboxes)]
    else:
        # no coefficients ever fit: emit the frame uncorrected, all verdicts indeterminate
        corrected = raw
        verdicts = [_indeterminate_verdict(d, b) for d, b in zip(kept, rboxes)]

    return FrameResult(
        frame_id=frame_id,
        theta=smoothed,
        theta_raw=theta_raw,
        fit_ok=theta_raw is not None,
        sample_count=sample_count,
        inlier_count=inlier_count,
        rms=rms,
        verdicts=verdicts,
        norm=norm,
        corrected=corrected if keep_corrected else None,
    )


def run_frames(
    frame_tuples: Iterable[tuple],
    cfg: PipelineConfig,
    keep_corrected: bool = False,
    on_frame: Optional[Callable] = None,
) -> list[FrameResult]:
    """Fold (frame_id, DepthFrame, detections) tuples in order through the pipeline."""
    ema = bias_mod.EmaState()
    results: list[FrameResult] = []
    for frame_id, raw, dets in frame_tuples:
        res = process_frame(frame_id, raw, dets, cfg, ema, keep_corrected=keep_corrected)
        results.append(res)
        if on_frame is not None:
            on_frame(res)
    return results
