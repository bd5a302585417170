"""Detection filtering, mask cleanup, rotated min-area boxes, and raster sampling."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .model import (
    DepthFrame,
    PipelineConfig,
    PixelGrid,
    RBox,
    RegionDetection,
    normalize_angle,
    rbox_axes,
)

# 8-connectivity for component labeling and the closing structuring element
_STRUCT_3X3 = np.ones((3, 3), dtype=bool)


class DegenerateMaskError(ValueError):
    """Mask has too few / collinear foreground pixels for a rotated box."""


def filter_detections(
    dets: list[RegionDetection], grid: PixelGrid, cfg: PipelineConfig
) -> list[RegionDetection]:
    """Keep detections with confidence >= t_c whose box center lies in the
    central horizontal band of the frame; input order is preserved."""
    mid = grid.width / 2.0
    half_band = cfg.central_band_fraction * grid.width / 2.0
    return [d for d in dets if d.confidence >= cfg.t_c and abs(d.cx - mid) <= half_band]


def clean_mask(mask: np.ndarray, min_component_px: int = 64) -> np.ndarray:
    """Morphological closing (3x3, one dilation then one erosion) followed by
    removal of 8-connected components smaller than ``min_component_px``."""
    mask = np.asarray(mask, dtype=bool)
    dilated = ndimage.binary_dilation(mask, structure=_STRUCT_3X3)
    # border_value=1 so closing does not erode components touching the frame edge
    closed = ndimage.binary_erosion(dilated, structure=_STRUCT_3X3, border_value=1)
    labels, n = ndimage.label(closed, structure=_STRUCT_3X3)
    if n == 0:
        return closed
    areas = np.bincount(labels.ravel())
    areas[0] = 0
    keep = areas >= min_component_px
    return keep[labels]


def min_area_rbox(mask: np.ndarray) -> RBox:
    """Minimum-area rotated rectangle of a binary mask.

    Takes the convex hull of the foreground pixel centers and sweeps the
    hull edge angles (rotating calipers): the optimal rectangle has one edge
    collinear with a hull edge. When that edge is lattice-aligned the pixel
    centers sit a full pixel inside the occupied footprint, so 1 px is added
    to both side lengths; oblique edges sample their boundary densely and
    get no compensation. The angle is folded into (-pi/2, pi/2] with the
    width measured along the angle direction (ties between the two axis
    choices keep the caliper axis).
    """
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if xs.size < 3:
        raise DegenerateMaskError(f"mask has {xs.size} foreground pixels, need >= 3")
    pts = np.column_stack([xs, ys]).astype(np.float64)
    try:
        hull = ConvexHull(pts)
    except QhullError as exc:
        raise DegenerateMaskError("foreground pixels are collinear") from exc
    hv = pts[hull.vertices]

    edges = np.roll(hv, -1, axis=0) - hv
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), math.pi / 2.0))

    best = None  # (area, angle, u_span, v_span, u_mid, v_mid)
    for ang in angles:
        c, s = math.cos(ang), math.sin(ang)
        u = hv[:, 0] * c + hv[:, 1] * s
        v = -hv[:, 0] * s + hv[:, 1] * c
        u_min, u_max = u.min(), u.max()
        v_min, v_max = v.min(), v.max()
        area = (u_max - u_min) * (v_max - v_min)
        if best is None or area < best[0]:
            best = (area, ang, u_max - u_min, v_max - v_min, (u_min + u_max) / 2.0, (v_min + v_max) / 2.0)

    _, ang, u_span, v_span, u_mid, v_mid = best
    c, s = math.cos(ang), math.sin(ang)
    cx = u_mid * c - v_mid * s
    cy = u_mid * s + v_mid * c

    lattice_aligned = min(ang, math.pi / 2.0 - ang) < 1e-9
    footprint = 1.0 if lattice_aligned else 0.0
    w = u_span + footprint
    h = v_span + footprint
    if v_span > u_span:
        ang += math.pi / 2.0
        w, h = h, w
    return RBox(cx=cx, cy=cy, angle=normalize_angle(ang), width=w, height=h)


def to_local(b: RBox, p) -> tuple:
    """Map an image point to the box's local (u, v) frame.

    u runs along the width axis, v along the height axis; the origin is the
    corner where v=0 is the box edge whose outward normal points toward
    smaller image y. Inside the box u is in [0, width], v in [0, height].
    Accepts scalars or arrays.
    """
    e_u, e_v = rbox_axes(b)
    px = np.asarray(p[0], dtype=np.float64) - b.cx
    py = np.asarray(p[1], dtype=np.float64) - b.cy
    u = px * e_u[0] + py * e_u[1] + b.width / 2.0
    v = px * e_v[0] + py * e_v[1] + b.height / 2.0
    return u, v


def from_local(b: RBox, uv) -> tuple:
    """Inverse of :func:`to_local`: local (u, v) back to image (x, y)."""
    e_u, e_v = rbox_axes(b)
    du = np.asarray(uv[0], dtype=np.float64) - b.width / 2.0
    dv = np.asarray(uv[1], dtype=np.float64) - b.height / 2.0
    x = b.cx + du * e_u[0] + dv * e_v[0]
    y = b.cy + du * e_u[1] + dv * e_v[1]
    return x, y


def bilinear_many(frame: DepthFrame, xs, ys) -> tuple[np.ndarray, np.ndarray]:
    """Validity-aware bilinear depth sampling at subpixel points (vectorized).

    Weights of invalid or out-of-bounds neighbors are dropped and the rest
    renormalized, so speckled sensor dropout does not void whole samples.
    Returns (values, present); values are 0 where not present.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    shape = np.broadcast(xs, ys).shape
    xs = np.broadcast_to(xs, shape).ravel()
    ys = np.broadcast_to(ys, shape).ravel()

    inside = (xs >= 0.0) & (xs <= frame.width - 1) & (ys >= 0.0) & (ys <= frame.height - 1)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0

    wsum = np.zeros(xs.shape, dtype=np.float64)
    acc = np.zeros(xs.shape, dtype=np.float64)
    for dx, dy, w in (
        (0, 0, (1 - fx) * (1 - fy)),
        (1, 0, fx * (1 - fy)),
        (0, 1, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        nx = x0 + dx
        ny = y0 + dy
        in_b = (nx >= 0) & (nx < frame.width) & (ny >= 0) & (ny < frame.height)
        nxc = np.clip(nx, 0, frame.width - 1)
        nyc = np.clip(ny, 0, frame.height - 1)
        ok = in_b & frame.validity[nyc, nxc]
        w_eff = np.where(ok, w, 0.0)
        wsum += w_eff
        acc += w_eff * frame.data[nyc, nxc]

    present = inside & (wsum > 0.0)
    values = np.zeros(xs.shape, dtype=np.float64)
    np.divide(acc, wsum, out=values, where=present)
    return values.reshape(shape), present.reshape(shape)


def sample_bilinear(frame: DepthFrame, p) -> Optional[float]:
    """Single-point bilinear depth sample; None if no valid support."""
    values, present = bilinear_many(frame, p[0], p[1])
    if not bool(present):
        return None
    return float(values)


def aabb_as_rbox(d: RegionDetection, grid: Optional[PixelGrid] = None) -> RBox:
    """Detection's axis-aligned box as a zero-angle RBox, clipped to the frame."""
    x0, x1 = d.cx - d.w / 2.0, d.cx + d.w / 2.0
    y0, y1 = d.cy - d.h / 2.0, d.cy + d.h / 2.0
    if grid is not None:
        x0, x1 = max(x0, 0.0), min(x1, grid.width - 1.0)
        y0, y1 = max(y0, 0.0), min(y1, grid.height - 1.0)
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"detection {d.region_id}: box lies outside the frame")
    return RBox(cx=(x0 + x1) / 2.0, cy=(y0 + y1) / 2.0, angle=0.0, width=x1 - x0, height=y1 - y0)
