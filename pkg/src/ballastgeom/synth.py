"""Synthetic track-scene generator: the ground-truth oracle for numeric tests.

Scenes are built in a rotated track frame: constant-depth planar sleeper
bands at a fixed pitch, ballast bays between them flush with the sleeper
surface, and rectangular depressions planted in labeled bays (either a
wide-area patch or a localized sleeper-edge gap). The raw depth adds a
planted polynomial bias field, Gaussian noise, spike outliers, and dropout,
so every pipeline stage can be checked against known truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .model import (
    BiasParams,
    CoordNorm,
    DepthFrame,
    LABEL_INSUFFICIENT,
    LABEL_SUFFICIENT,
    PixelGrid,
    RegionDetection,
)
from . import bias as bias_mod

PLACEMENT_GLOBAL = "global"
PLACEMENT_EDGE_BAND = "edge_band"

# geometry of planted patches, as fractions of track width / bay height
_GLOBAL_PATCH_WIDTH_FRAC = 0.9
_EDGE_GAP_WIDTH_FRAC = 0.22
_EDGE_GAP_REACH_FRAC = 0.30


@dataclass(frozen=True)
class BaySpec:
    """Ground-truth condition of one ballast bay."""

    label: str
    depth_m: float = 0.0
    area_fraction: float = 0.0
    placement: str = PLACEMENT_GLOBAL

    def __post_init__(self) -> None:
        if self.label not in (LABEL_SUFFICIENT, LABEL_INSUFFICIENT):
            raise ValueError(f"bay label must be sufficient/insufficient, got {self.label!r}")
        if self.placement not in (PLACEMENT_GLOBAL, PLACEMENT_EDGE_BAND):
            raise ValueError(f"bay placement must be global/edge_band, got {self.placement!r}")
        if self.label == LABEL_INSUFFICIENT:
            if not self.depth_m > 0.0:
                raise ValueError("insufficient bays need depth_m > 0")
            if self.placement == PLACEMENT_GLOBAL and not (0.0 < self.area_fraction < 1.0):
                raise ValueError("global depressions need area_fraction in (0, 1)")


@dataclass(frozen=True)
class SceneSpec:
    """Full description of a synthetic scene; rendering is deterministic per seed."""

    width: int = 640
    height: int = 480
    sleeper_pitch_px: float = 110.0
    sleeper_width_px: float = 14.0
    base_depth_m: float = 2.0
    track_angle_rad: float = 0.0
    bays: tuple = (BaySpec(LABEL_SUFFICIENT),)
    theta_true: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    noise_sigma_m: float = 0.0
    outlier_fraction: float = 0.0
    outlier_magnitude_m: float = 0.5
    dropout_fraction: float = 0.0
    frame_count: int = 1
    rng_seed: int = 0
    track_width_frac: float = 0.6
    mask_margin_px: float = 2.0
    emit_truth_votes: bool = False
    frame_id_start: int = 0

    def __post_init__(self) -> None:
        if self.sleeper_pitch_px <= self.sleeper_width_px:
            raise ValueError("sleeper_pitch_px must exceed sleeper_width_px")
        if len(self.theta_true) != 6:
            raise ValueError("theta_true must have 6 coefficients")
        for name in ("outlier_fraction", "dropout_fraction"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ValueError(f"{name} must be in [0, 1), got {v}")
        if self.noise_sigma_m < 0.0:
            raise ValueError("noise_sigma_m must be >= 0")
        if not (0.0 < self.track_width_frac <= 0.95):
            raise ValueError("track_width_frac must be in (0, 0.95]")
        if self.frame_count < 1:
            raise ValueError("frame_count must be >= 1")
        if self.rng_seed < 0 or self.frame_id_start < 0:
            raise ValueError("rng_seed and frame_id_start must be >= 0")
        if not self.bays:
            raise ValueError("scene needs at least one bay")
        object.__setattr__(self, "bays", tuple(self.bays))
        object.__setattr__(self, "theta_true", tuple(float(t) for t in self.theta_true))


@dataclass
class SyntheticRegion:
    """One rendered bay: its detection payload plus ground-truth bookkeeping."""

    region_id: str
    label: str
    placement: Optional[str]
    planted_fraction: float
    detection: RegionDetection


@dataclass
class SyntheticFrame:
    frame_id: int
    raw: DepthFrame
    detections: list
    spike_mask: np.ndarray  # pixels that received a planted outlier spike

    def as_tuple(self) -> tuple:
        return self.frame_id, self.raw, self.detections


@dataclass
class SyntheticScene:
    spec: SceneSpec
    theta_true: BiasParams
    true_frame: DepthFrame  # noiseless, bias-free surface (shared by all frames)
    rgb: np.ndarray  # (H, W, 3) uint8 schematic image
    regions: list
    frames: list
    truth: dict  # (frame_id, region_id) -> label

    def frame_tuples(self) -> list:
        return [f.as_tuple() for f in self.frames]


def scene_spec_from_dict(doc: dict) -> SceneSpec:
    doc = dict(doc)
    bays = tuple(
        BaySpec(
            label=b["label"],
            depth_m=float(b.get("depth_m", 0.0)),
            area_fraction=float(b.get("area_fraction", 0.0)),
            placement=b.get("placement", PLACEMENT_GLOBAL),
        )
        for b in doc.pop("bays", [{"label": LABEL_SUFFICIENT}])
    )
    known = {f.name for f in SceneSpec.__dataclass_fields__.values()}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValueError(f"unknown scene spec keys: {', '.join(unknown)}")
    return SceneSpec(bays=bays, **doc)


def scene_spec_to_dict(spec: SceneSpec) -> dict:
    doc = {
        f: getattr(spec, f)
        for f in SceneSpec.__dataclass_fields__
        if f not in ("bays", "theta_true")
    }
    doc["theta_true"] = list(spec.theta_true)
    doc["bays"] = [
        {
            "label": b.label,
            "depth_m": b.depth_m,
            "area_fraction": b.area_fraction,
            "placement": b.placement,
        }
        for b in spec.bays
    ]
    return doc


def _scene_coords(spec: SceneSpec) -> tuple[np.ndarray, np.ndarray]:
    grid = PixelGrid(spec.width, spec.height)
    cx, cy = grid.center
    xs = np.arange(spec.width, dtype=np.float64)[None, :] - cx
    ys = np.arange(spec.height, dtype=np.float64)[:, None] - cy
    c, s = math.cos(spec.track_angle_rad), math.sin(spec.track_angle_rad)
    u = xs * c + ys * s
    v = -xs * s + ys * c
    return u, v


def _bay_bounds(spec: SceneSpec) -> tuple[float, list[tuple[float, float]]]:
    """Start of the first sleeper and the (lo, hi) of each bay in scene v coords."""
    n = len(spec.bays)
    span = n * spec.sleeper_pitch_px + spec.sleeper_width_px
    v0 = -span / 2.0
    bounds = [
        (
            v0 + k * spec.sleeper_pitch_px + spec.sleeper_width_px,
            v0 + (k + 1) * spec.sleeper_pitch_px,
        )
        for k in range(n)
    ]
    return v0, bounds


def _check_fits(spec: SceneSpec, bounds: list[tuple[float, float]]) -> None:
    grid = PixelGrid(spec.width, spec.height)
    cx, cy = grid.center
    half_u = spec.track_width_frac * spec.width / 2.0 + spec.mask_margin_px
    c, s = math.cos(spec.track_angle_rad), math.sin(spec.track_angle_rad)
    extreme_v = [bounds[0][0] - spec.mask_margin_px - 12.0, bounds[-1][1] + spec.mask_margin_px + 12.0]
    for v in extreme_v:
        for u in (-half_u, half_u):
            x = cx + u * c - v * s
            y = cy + u * s + v * c
            if not (1.0 <= x <= spec.width - 2 and 1.0 <= y <= spec.height - 2):
                raise ValueError(
                    f"scene layout does not fit the frame: bay corner at ({x:.1f}, {y:.1f})"
                )


def _patch_rect(spec: SceneSpec, bay: BaySpec, lo: float, hi: float, rng: np.random.Generator):
    """Depression rectangle (u0, u1, v0, v1) in scene coordinates, or None."""
    if bay.label != LABEL_INSUFFICIENT:
        return None
    tw = spec.track_width_frac * spec.width
    m = spec.mask_margin_px
    bay_h = hi - lo
    if bay.placement == PLACEMENT_GLOBAL:
        region_area = (tw + 2 * m) * (bay_h + 2 * m)
        target = bay.area_fraction * region_area
        pw = _GLOBAL_PATCH_WIDTH_FRAC * tw
        ph = target / pw
        if ph > bay_h - 2.0:
            ph = bay_h - 2.0
            pw = target / ph
        if pw > tw:
            raise ValueError(
                f"area_fraction {bay.area_fraction} does not fit inside the bay"
            )
        mid = (lo + hi) / 2.0
        return (-pw / 2.0, pw / 2.0, mid - ph / 2.0, mid + ph / 2.0)
    # localized gap hugging one sleeper edge, confined to the edge band
    gw = _EDGE_GAP_WIDTH_FRAC * tw
    reach = _EDGE_GAP_REACH_FRAC * bay_h
    u_pos = float(rng.uniform(-tw / 2.0 + gw / 2.0 + 2.0, tw / 2.0 - gw / 2.0 - 2.0))
    top = bool(rng.integers(0, 2))
    if top:
        v_lo, v_hi = lo, lo + reach
    else:
        v_lo, v_hi = hi - reach, hi
    return (u_pos - gw / 2.0, u_pos + gw / 2.0, v_lo, v_hi)


def render_scene(spec: SceneSpec) -> SyntheticScene:
    """Render the scene: true surface, per-frame noisy raw depth, detections
    with masks, and the ground-truth label manifest. Bit-reproducible per seed."""
    grid = PixelGrid(spec.width, spec.height)
    norm = CoordNorm.for_grid(grid)
    theta_true = BiasParams(theta=np.array(spec.theta_true), norm=norm)

    u, v = _scene_coords(spec)
    v0, bounds = _bay_bounds(spec)
    _check_fits(spec, bounds)

    tw = spec.track_width_frac * spec.width
    m = spec.mask_margin_px
    layout_rng = np.random.default_rng([spec.rng_seed, 7])

    d_true = np.full((spec.height, spec.width), spec.base_depth_m, dtype=np.float64)
    sleeper_band = np.zeros(d_true.shape, dtype=bool)
    n_sleepers = len(spec.bays) + 1
    for k in range(n_sleepers):
        s_lo = v0 + k * spec.sleeper_pitch_px
        sleeper_band |= (v >= s_lo) & (v < s_lo + spec.sleeper_width_px)

    regions: list[SyntheticRegion] = []
    depressed = np.zeros(d_true.shape, dtype=bool)
    for k, (bay, (lo, hi)) in enumerate(zip(spec.bays, bounds)):
        mask = (np.abs(u) <= tw / 2.0 + m) & (v >= lo - m) & (v <= hi + m)
        ys, xs = np.nonzero(mask)
        x_min, x_max = xs.min(), xs.max()
        y_min, y_max = ys.min(), ys.max()
        patch = _patch_rect(spec, bay, lo, hi, layout_rng)
        planted = 0.0
        if patch is not None:
            u0, u1, pv0, pv1 = patch
            in_patch = (u >= u0) & (u < u1) & (v >= pv0) & (v < pv1)
            d_true[in_patch] -= bay.depth_m
            depressed |= in_patch
            planted = ((u1 - u0) * (pv1 - pv0)) / ((tw + 2 * m) * (hi - lo + 2 * m))
        vote = (bay.label == LABEL_INSUFFICIENT) if spec.emit_truth_votes else None
        det = RegionDetection(
            region_id=f"r{k}",
            cx=(x_min + x_max) / 2.0,
            cy=(y_min + y_max) / 2.0,
            w=float(x_max - x_min + 1),
            h=float(y_max - y_min + 1),
            confidence=0.9,
            mask=mask,
            insufficient_vote=vote,
        )
        regions.append(
            SyntheticRegion(
                region_id=det.region_id,
                label=bay.label,
                placement=bay.placement if bay.label == LABEL_INSUFFICIENT else None,
                planted_fraction=planted,
                detection=det,
            )
        )

    true_frame = DepthFrame.from_data(d_true)

    # schematic RGB for overlays: sleepers bright, ballast mid, depressions dark
    gray = np.full(d_true.shape, 115, dtype=np.uint8)
    gray[sleeper_band] = 185
    gray[depressed] = 55
    rgb = np.repeat(gray[:, :, None], 3, axis=2)

    xs_grid = np.arange(spec.width, dtype=np.float64)[None, :]
    ys_grid = np.arange(spec.height, dtype=np.float64)[:, None]
    bias_field = bias_mod.eval_bias(theta_true, xs_grid, ys_grid)

    detections = [r.detection for r in regions]
    frames: list[SyntheticFrame] = []
    truth: dict = {}
    for j in range(spec.frame_count):
        fid = spec.frame_id_start + j
        rng = np.random.default_rng([spec.rng_seed, 101, j])
        noise = rng.normal(0.0, 1.0, d_true.shape) * spec.noise_sigma_m
        spike_u = rng.random(d_true.shape)
        dropout_u = rng.random(d_true.shape)
        spikes = spike_u < spec.outlier_fraction
        raw = d_true + bias_field + noise
        raw = np.where(spikes, raw + spec.outlier_magnitude_m, raw)
        validity = dropout_u >= spec.dropout_fraction
        frames.append(
            SyntheticFrame(
                frame_id=fid,
                raw=DepthFrame.from_data(np.where(validity, raw, 0.0), validity),
                detections=detections,
                spike_mask=spikes,
            )
        )
        for r in regions:
            truth[(fid, r.region_id)] = r.label

    return SyntheticScene(
        spec=spec,
        theta_true=theta_true,
        true_frame=true_frame,
        rgb=rgb,
        regions=regions,
        frames=frames,
        truth=truth,
    )


def _bias_field_magnitude(scene_theta: np.ndarray, spec: SceneSpec) -> float:
    grid = PixelGrid(spec.width, spec.height)
    norm = CoordNorm.for_grid(grid)
    params = BiasParams(theta=np.asarray(scene_theta), norm=norm)
    xs = np.arange(spec.width, dtype=np.float64)[None, :]
    ys = np.arange(spec.height, dtype=np.float64)[:, None]
    return float(np.max(np.abs(bias_mod.spatial_bias(params, xs, ys))))


def _spec_for_axis_value(spec: SceneSpec, axis: str, value: float) -> SceneSpec:
    if axis == "noise":
        return replace(spec, noise_sigma_m=float(value))
    if axis == "outliers":
        return replace(spec, outlier_fraction=float(value))
    if axis == "bias_magnitude":
        base = np.asarray(spec.theta_true, dtype=np.float64)
        mag = _bias_field_magnitude(base, spec)
        if mag == 0.0:
            raise ValueError("bias_magnitude sweep needs a nonzero theta_true to scale")
        scaled = base.copy()
        scaled[:5] *= float(value) / mag
        return replace(spec, theta_true=tuple(scaled))
    raise ValueError(f"unknown sweep axis {axis!r}")


def perturbation_sweep(spec: SceneSpec, axis: str, values, cfg=None) -> list[dict]:
    """Run the full pipeline per axis value; one report row per value.

    Each row carries the bias-recovery field error (constant removed),
    corrected-depth RMS against the true surface, and classification
    accuracy (indeterminate counts as wrong). Rows come back in input order.
    """
    from . import pipeline as pipeline_mod
    from .model import PipelineConfig

    if cfg is None:
        cfg = PipelineConfig()
    rows: list[dict] = []
    for value in values:
        scene = render_scene(_spec_for_axis_value(spec, axis, float(value)))
        results = pipeline_mod.run_frames(scene.frame_tuples(), cfg, keep_corrected=True)
        last = results[-1]
        row = {
            "axis": axis,
            "value": float(value),
            "theta_field_error_m": None,
            "corrected_rms_m": None,
            "accuracy": None,
        }
        if last.theta is not None:
            row["theta_field_error_m"] = bias_field_error(last.theta, scene.theta_true)
            row["corrected_rms_m"] = corrected_rms(
                last.corrected, scene.true_frame, exclude=scene.frames[-1].spike_mask
            )
        total = 0
        correct = 0
        for res in results:
            for verdict in res.verdicts:
                total += 1
                if verdict.label == scene.truth[(res.frame_id, verdict.region_id)]:
                    correct += 1
        if total:
            row["accuracy"] = correct / total
        rows.append(row)
    return rows


def bias_field_error(estimated: BiasParams, true: BiasParams) -> float:
    """Max absolute difference of the two bias fields over the frame after
    removing the best constant (the level is unobservable by design)."""
    if estimated.norm != true.norm:
        raise ValueError("bias params use different normalizations")
    w = int(round(estimated.norm.x_scale * 2))
    h = int(round(estimated.norm.y_scale * 2))
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    diff = bias_mod.spatial_bias(estimated, xs, ys) - bias_mod.spatial_bias(true, xs, ys)
    return float(np.max(np.abs(diff - diff.mean())))


def corrected_rms(
    corrected: DepthFrame, true: DepthFrame, exclude: Optional[np.ndarray] = None
) -> float:
    """RMS deviation of the corrected depth from the true surface over valid
    pixels, after removing the best constant.

    ``exclude`` masks out pixels that carry planted sensor artifacts (spikes):
    bias correction removes smooth distortion, not per-pixel outliers, so
    fidelity is measured where the model applies.
    """
    valid = corrected.validity & true.validity
    if exclude is not None:
        valid = valid & ~exclude
    diff = corrected.data[valid] - true.data[valid]
    diff = diff - diff.mean()
    return float(np.sqrt(np.mean(diff * diff)))
