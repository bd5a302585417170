"""Domain types shared by every stage of the ballast depth-geometry pipeline.

Conventions used throughout the package:

- Depth values are meters. Invalid pixels carry ``validity=False`` and a
  data value of 0.0 (the value is never read; validity is authoritative).
- Pixel coordinates are ``(x, y)`` with ``x`` the column and ``y`` the row;
  pixel centers sit at integer coordinates ``0..W-1`` / ``0..H-1``.
- Rotated-box angles are radians in ``(-pi/2, pi/2]``, measured from the
  image x-axis to the box's width axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

LABEL_SUFFICIENT = "sufficient"
LABEL_INSUFFICIENT = "insufficient"
LABEL_INDETERMINATE = "indeterminate"

BOX_MODE_AABB = "aabb"
BOX_MODE_RBB = "rbb"


@dataclass(frozen=True)
class PixelGrid:
    """Frame dimensions defining the sampled pixel domain."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"PixelGrid dimensions must be positive, got {self.width}x{self.height}")

    @property
    def center(self) -> tuple[float, float]:
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def contains(self, x: float, y: float) -> bool:
        """True if the (sub)pixel point lies within the sampled domain."""
        return 0.0 <= x <= self.width - 1 and 0.0 <= y <= self.height - 1


@dataclass
class DepthFrame:
    """One depth raster in meters with explicit per-pixel validity.

    ``data`` is row-major ``(height, width)`` float64; ``validity`` is a
    boolean raster of the same shape, False where the sensor gave no return.
    """

    width: int
    height: int
    data: np.ndarray
    validity: np.ndarray

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.width, self.height)

    @staticmethod
    def from_data(data: np.ndarray, validity: Optional[np.ndarray] = None) -> "DepthFrame":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("depth data must be 2-D (height, width)")
        if validity is None:
            validity = np.isfinite(data) & (data > 0.0)
        validity = np.asarray(validity, dtype=bool)
        if validity.shape != data.shape:
            raise ValueError("validity shape must match data shape")
        data = np.where(validity, data, 0.0)
        h, w = data.shape
        return DepthFrame(width=w, height=h, data=data, validity=validity)


def validate_frame(frame: DepthFrame) -> list[str]:
    """Check every DepthFrame invariant; returns violations (empty = valid)."""
    violations: list[str] = []
    if frame.width < 8 or frame.height < 8:
        violations.append(f"dimensions: frame is {frame.width}x{frame.height}, minimum is 8x8")
    if frame.data.shape != (frame.height, frame.width):
        violations.append(
            f"data: shape {frame.data.shape} does not match {frame.height}x{frame.width} "
            f"({frame.width * frame.height} values expected)"
        )
        return violations
    if frame.validity.shape != frame.data.shape:
        violations.append(f"validity: shape {frame.validity.shape} does not match data shape")
        return violations
    valid_vals = frame.data[frame.validity]
    if valid_vals.size:
        if not np.all(np.isfinite(valid_vals)):
            violations.append("data: non-finite depth at a pixel marked valid")
        if np.any(valid_vals <= 0.0):
            violations.append("data: non-positive depth at a pixel marked valid")
    return violations


@dataclass(frozen=True)
class RBox:
    """Rotated rectangle: center, angle of the width axis, and side lengths."""

    cx: float
    cy: float
    angle: float
    width: float
    height: float

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"RBox sides must be positive, got {self.width}x{self.height}")
        if not (-math.pi / 2 < self.angle <= math.pi / 2):
            raise ValueError(f"RBox angle {self.angle} outside (-pi/2, pi/2]")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy], dtype=np.float64)


def normalize_angle(angle: float) -> float:
    """Fold an angle into (-pi/2, pi/2] modulo pi."""
    a = math.fmod(angle, math.pi)
    if a > math.pi / 2:
        a -= math.pi
    elif a <= -math.pi / 2:
        a += math.pi
    return a


def rbox_axes(b: RBox) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors of the box's width (u) and height (v) axes in image coords."""
    c, s = math.cos(b.angle), math.sin(b.angle)
    return np.array([c, s]), np.array([-s, c])


def rbox_corners(b: RBox) -> np.ndarray:
    """Four corners, (4, 2), counterclockwise starting at local (u, v) = (0, 0).

    Rotating the corners by -angle about the center yields an axis-aligned
    width x height rectangle.
    """
    e_u, e_v = rbox_axes(b)
    hw, hh = b.width / 2.0, b.height / 2.0
    offsets = np.array([(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)])
    return b.center[None, :] + offsets[:, 0:1] * e_u[None, :] + offsets[:, 1:2] * e_v[None, :]


@dataclass(frozen=True)
class CoordNorm:
    """Pixel-coordinate normalization used for bias-surface fitting.

    Maps pixel (x, y) to roughly [-1, 1]^2 so quadratic design columns stay
    well conditioned.
    """

    x_offset: float
    y_offset: float
    x_scale: float
    y_scale: float

    def __post_init__(self) -> None:
        if not (self.x_scale > 0 and self.y_scale > 0):
            raise ValueError("CoordNorm scales must be positive")

    @staticmethod
    def for_grid(grid: PixelGrid) -> "CoordNorm":
        cx, cy = grid.center
        return CoordNorm(x_offset=cx, y_offset=cy, x_scale=grid.width / 2.0, y_scale=grid.height / 2.0)

    def apply(self, x, y):
        return (np.asarray(x, dtype=np.float64) - self.x_offset) / self.x_scale, (
            np.asarray(y, dtype=np.float64) - self.y_offset
        ) / self.y_scale


@dataclass(frozen=True, eq=False)
class BiasParams:
    """Six polynomial surface coefficients plus the normalization they were fit in.

    theta = (t1..t6) parameterizes t1*x' + t2*y' + t3*x'^2 + t4*y'^2 + t5*x'y' + t6
    with (x', y') the normalized pixel coordinates; t6 is the constant level.
    """

    theta: np.ndarray
    norm: CoordNorm

    def __post_init__(self) -> None:
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.shape != (6,):
            raise ValueError(f"theta must have 6 coefficients, got {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta coefficients must be finite")
        object.__setattr__(self, "theta", theta)

    @staticmethod
    def zero(norm: CoordNorm) -> "BiasParams":
        return BiasParams(theta=np.zeros(6), norm=norm)


SOURCE_MIDLINE = "midline"
SOURCE_FALLBACK_TOP = "fallback_top"
SOURCE_FALLBACK_BOTTOM = "fallback_bottom"


@dataclass
class SleeperSamples:
    """Sleeper-aligned raw depth samples (x, y in px, z in meters)."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    source: np.ndarray  # per-sample tag: midline / fallback_top / fallback_bottom

    def __len__(self) -> int:
        return int(self.z.size)

    def subset(self, keep: np.ndarray) -> "SleeperSamples":
        return SleeperSamples(self.x[keep], self.y[keep], self.z[keep], self.source[keep])

    @staticmethod
    def empty() -> "SleeperSamples":
        return SleeperSamples(
            np.empty(0), np.empty(0), np.empty(0), np.empty(0, dtype="<U16")
        )


@dataclass
class RegionDetection:
    """One upstream detection: axis-aligned box, confidence, optional mask and vote."""

    region_id: str
    cx: float
    cy: float
    w: float
    h: float
    confidence: float
    mask: Optional[np.ndarray] = None  # (H, W) bool, full-image coordinates
    insufficient_vote: Optional[bool] = None

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"detection {self.region_id}: box sides must be positive")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"detection {self.region_id}: confidence {self.confidence} outside [0, 1]")


@dataclass
class RegionVerdict:
    """Per-region classification outcome.

    rho / gamma_max are None when the corresponding criterion was not
    computed (disabled, or geometry too degraded); c1/c2 mirror that with
    None. The label is insufficient iff any enabled criterion fired, or
    indeterminate when geometry failed and no external vote was available.
    """

    region_id: str
    rho: Optional[float]
    gamma_max: Optional[float]
    c1_fired: Optional[bool]
    c2_fired: Optional[bool]
    cy_fired: bool
    label: str
    rbox: RBox


def verdict_label(
    c1_fired: Optional[bool],
    c2_fired: Optional[bool],
    cy_fired: Optional[bool],
    indeterminate: bool = False,
) -> str:
    """Final label as a pure function of the criterion flags."""
    if indeterminate:
        return LABEL_INDETERMINATE
    fired = any(bool(f) for f in (c1_fired, c2_fired, cy_fired) if f is not None)
    return LABEL_INSUFFICIENT if fired else LABEL_SUFFICIENT


@dataclass(frozen=True)
class PipelineConfig:
    """All tunable pipeline parameters with the field-validated defaults."""

    t_c: float = 0.3
    nms_iou: float = 0.35  # provenance only: NMS happens upstream of this pipeline
    central_band_fraction: float = 0.70
    tau_mad: float = 3.5
    ransac_iters: int = 160
    t_res: float = 0.01
    lambda_ema: float = 0.2
    t_z: float = 0.03
    eta1: float = 0.4
    kappa: float = 0.4
    eta2: float = 0.18
    delta_w_px: float = 10.0
    rng_seed: int = 0
    use_c1: bool = True
    use_c2: bool = True
    use_cy: bool = True
    box_mode: str = BOX_MODE_RBB
    edge_band_px: int = 3
    min_component_px: int = 64

    def __post_init__(self) -> None:
        checks = [
            (0.0 <= self.t_c <= 1.0, "t_c", "must be in [0, 1]"),
            (0.0 < self.nms_iou <= 1.0, "nms_iou", "must be in (0, 1]"),
            (0.0 < self.central_band_fraction <= 1.0, "central_band_fraction", "must be in (0, 1]"),
            (self.tau_mad > 0.0, "tau_mad", "must be positive"),
            (self.ransac_iters >= 1, "ransac_iters", "must be >= 1"),
            (self.t_res > 0.0, "t_res", "must be positive"),
            (0.0 < self.lambda_ema < 1.0, "lambda_ema", "must be in (0, 1)"),
            (self.t_z > 0.0, "t_z", "must be positive"),
            (0.0 < self.eta1 <= 1.0, "eta1", "must be in (0, 1]"),
            (0.0 < self.kappa < 0.5, "kappa", "must be in (0, 0.5)"),
            (0.0 < self.eta2 <= 1.0, "eta2", "must be in (0, 1]"),
            (self.delta_w_px > 0.0, "delta_w_px", "must be positive"),
            (self.rng_seed >= 0, "rng_seed", "must be >= 0 (seeds frame-level generators)"),
            (self.box_mode in (BOX_MODE_AABB, BOX_MODE_RBB), "box_mode", "must be 'aabb' or 'rbb'"),
            (self.edge_band_px >= 1, "edge_band_px", "must be >= 1"),
            (self.min_component_px >= 1, "min_component_px", "must be >= 1"),
        ]
        for ok, name, reason in checks:
            if not ok:
                raise ValueError(f"config field {name}: {reason} (got {getattr(self, name)!r})")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_dict(d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(PipelineConfig)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return PipelineConfig(**d)

    def with_overrides(self, **kwargs) -> "PipelineConfig":
        return replace(self, **kwargs)
