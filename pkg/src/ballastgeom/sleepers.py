"""Sleeper-aligned depth sampling: segment construction between rotated boxes,
fallback lines at the frame's first/last box, raw-depth extraction, and MAD
outlier filtering."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .maskgeom import bilinear_many
from .model import (
    DepthFrame,
    PixelGrid,
    RBox,
    SleeperSamples,
    SOURCE_FALLBACK_BOTTOM,
    SOURCE_FALLBACK_TOP,
    SOURCE_MIDLINE,
    normalize_angle,
    rbox_corners,
)

MIN_MIDLINE_OVERLAP_PX = 10.0


class NoOverlapError(ValueError):
    """Adjacent boxes do not overlap enough along the track-normal axis."""


class TooFewSamplesError(ValueError):
    """Not enough samples for a robust statistic."""


class EmptySamplesError(ValueError):
    """No valid depth sample could be extracted from any segment."""


@dataclass(frozen=True)
class Segment:
    """A sampling line segment in image coordinates with its provenance tag."""

    x0: float
    y0: float
    x1: float
    y1: float
    tag: str

    @property
    def length(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)


def mean_angle(angles) -> float:
    """Circular mean over the doubled angles (axial data, period pi)."""
    a = np.asarray(angles, dtype=np.float64)
    return normalize_angle(0.5 * math.atan2(float(np.mean(np.sin(2 * a))), float(np.mean(np.cos(2 * a)))))


def _frame_axes(phi: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([c, s]), np.array([-s, c])


def order_boxes(rboxes: list[RBox]) -> list[RBox]:
    """Sort boxes along the track: by center v in the mean-angle rotated frame.

    Adjacency for sleeper sampling is defined by consecutive pairs of the
    returned list.
    """
    if not rboxes:
        raise ValueError("order_boxes requires at least one box")
    phi = mean_angle([b.angle for b in rboxes])
    _, e_v = _frame_axes(phi)
    return sorted(rboxes, key=lambda b: b.cx * e_v[0] + b.cy * e_v[1])


def midline_segment(a: RBox, b: RBox) -> Segment:
    """Sleeper sampling line halfway between the adjacent edges of two boxes.

    Oriented at the pair's mean angle and spanning the intersection of the
    boxes' projected u-ranges. Symmetric in its arguments: the upper/lower
    roles are derived from the geometry, not the argument order.
    """
    phi = mean_angle([a.angle, b.angle])
    e_u, e_v = _frame_axes(phi)
    v_a = a.cx * e_v[0] + a.cy * e_v[1]
    v_b = b.cx * e_v[0] + b.cy * e_v[1]
    upper, lower = (a, b) if v_a <= v_b else (b, a)

    # corners 0,1 form the v=0 (top) edge, corners 2,3 the v=h (bottom) edge
    cu = rbox_corners(upper)
    cl = rbox_corners(lower)
    v_bottom_of_upper = float(np.mean(cu[2:4] @ e_v))
    v_top_of_lower = float(np.mean(cl[0:2] @ e_v))
    seg_v = (v_bottom_of_upper + v_top_of_lower) / 2.0

    u_upper = cu @ e_u
    u_lower = cl @ e_u
    lo = max(u_upper.min(), u_lower.min())
    hi = min(u_upper.max(), u_lower.max())
    if hi - lo < MIN_MIDLINE_OVERLAP_PX:
        raise NoOverlapError(
            f"projected u-ranges overlap by {hi - lo:.1f} px, need >= {MIN_MIDLINE_OVERLAP_PX}"
        )
    p0 = lo * e_u + seg_v * e_v
    p1 = hi * e_u + seg_v * e_v
    return Segment(p0[0], p0[1], p1[0], p1[1], SOURCE_MIDLINE)


def _clip_segment(p0: np.ndarray, p1: np.ndarray, grid: PixelGrid):
    """Liang-Barsky clip of a segment to the sampled pixel domain."""
    d = p1 - p0
    t0, t1 = 0.0, 1.0
    for axis, lo, hi in ((0, 0.0, grid.width - 1.0), (1, 0.0, grid.height - 1.0)):
        if d[axis] == 0.0:
            if p0[axis] < lo or p0[axis] > hi:
                return None
            continue
        ta = (lo - p0[axis]) / d[axis]
        tb = (hi - p0[axis]) / d[axis]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return None
    return p0 + t0 * d, p0 + t1 * d


def fallback_line(b: RBox, side: str, delta_w: float, grid: PixelGrid):
    """Sampling line for a box with no neighbor above (side='top') or below
    (side='bottom'): the corresponding box edge pushed outward along the
    box's v-axis by delta_w pixels, clipped to the frame.

    Returns None when the offset segment falls entirely outside the frame.
    """
    if side not in ("top", "bottom"):
        raise ValueError(f"side must be 'top' or 'bottom', got {side!r}")
    corners = rbox_corners(b)
    _, e_v = _frame_axes(b.angle)
    if side == "top":
        edge = corners[0:2]
        offset = -delta_w * e_v
        tag = SOURCE_FALLBACK_TOP
    else:
        edge = corners[2:4]
        offset = delta_w * e_v
        tag = SOURCE_FALLBACK_BOTTOM
    clipped = _clip_segment(edge[0] + offset, edge[1] + offset, grid)
    if clipped is None:
        return None
    p0, p1 = clipped
    return Segment(p0[0], p0[1], p1[0], p1[1], tag)


def extract_samples(frame: DepthFrame, segments: list[Segment]) -> SleeperSamples:
    """Sample the RAW depth along each segment at 1 px arc-length steps.

    Samples with no valid bilinear support are dropped; raises
    EmptySamplesError when nothing valid remains across all segments.
    """
    if not segments:
        raise EmptySamplesError("no sampling segments")
    xs_all, ys_all, zs_all, tags_all = [], [], [], []
    for seg in segments:
        length = seg.length
        if length <= 0.0:
            continue
        steps = np.arange(0.0, math.floor(length) + 0.5, 1.0)
        xs = seg.x0 + (seg.x1 - seg.x0) * steps / length
        ys = seg.y0 + (seg.y1 - seg.y0) * steps / length
        vals, present = bilinear_many(frame, xs, ys)
        if not present.any():
            continue
        xs_all.append(xs[present])
        ys_all.append(ys[present])
        zs_all.append(vals[present])
        tags_all.append(np.full(int(present.sum()), seg.tag, dtype="<U16"))
    if not zs_all:
        raise EmptySamplesError("all segment samples fell on invalid or out-of-frame pixels")
    return SleeperSamples(
        np.concatenate(xs_all),
        np.concatenate(ys_all),
        np.concatenate(zs_all),
        np.concatenate(tags_all),
    )


def mad_filter(samples: SleeperSamples, tau: float) -> SleeperSamples:
    """Median-absolute-deviation outlier rejection: keep |z - median| < tau * MAD.

    A zero MAD (at least half the samples identical) degenerates the scaled
    test, so only samples exactly at the median are kept in that case; a
    fully constant set therefore passes through unchanged.
    """
    n = len(samples)
    if n < 3:
        raise TooFewSamplesError(f"MAD filter needs >= 3 samples, got {n}")
    med = float(np.median(samples.z))
    dev = np.abs(samples.z - med)
    mad = float(np.median(dev))
    if mad == 0.0:
        keep = samples.z == med
    else:
        keep = dev < tau * mad
    return samples.subset(keep)
