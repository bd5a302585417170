"""Batch PNG rendering: verdict overlays and raw/corrected depth triptychs."""

from __future__ import annotations

from typing import Optional

import numpy as np
from PIL import Image, ImageDraw

from .model import (
    DepthFrame,
    LABEL_INDETERMINATE,
    LABEL_INSUFFICIENT,
    LABEL_SUFFICIENT,
    rbox_corners,
)

LABEL_COLORS = {
    LABEL_SUFFICIENT: (70, 200, 90),
    LABEL_INSUFFICIENT: (230, 60, 50),
    LABEL_INDETERMINATE: (240, 200, 40),
}
SEGMENT_COLOR = (80, 140, 240)

# compact blue->cyan->yellow->red gradient for depth maps
_ANCHORS = np.array(
    [
        (0.00, 30, 40, 140),
        (0.33, 40, 170, 200),
        (0.66, 230, 220, 60),
        (1.00, 200, 40, 30),
    ]
)


def colorize(values01: np.ndarray) -> np.ndarray:
    v = np.clip(values01, 0.0, 1.0)
    out = np.empty(v.shape + (3,), dtype=np.uint8)
    for c in range(3):
        out[..., c] = np.interp(v, _ANCHORS[:, 0], _ANCHORS[:, c + 1]).astype(np.uint8)
    return out


def depth_range(frames: list) -> tuple[float, float]:
    """Shared display range (2nd..98th percentile of valid depths)."""
    chunks = [f.data[f.validity] for f in frames if f.validity.any()]
    if not chunks:
        return 0.0, 1.0
    vals = np.concatenate(chunks)
    lo, hi = np.percentile(vals, [2.0, 98.0])
    if hi <= lo:
        hi = lo + 1e-6
    return float(lo), float(hi)


def depth_colormap(frame: DepthFrame, lo: float, hi: float) -> np.ndarray:
    norm = (frame.data - lo) / (hi - lo)
    rgb = colorize(norm)
    rgb[~frame.validity] = 0
    return rgb


def render_overlay(
    background: np.ndarray, boxes: list, labels: list, segments: Optional[list] = None
) -> Image.Image:
    """Draw rotated boxes colored by label plus sleeper sampling lines."""
    img = Image.fromarray(background.copy())
    draw = ImageDraw.Draw(img)
    for seg in segments or []:
        draw.line([(seg.x0, seg.y0), (seg.x1, seg.y1)], fill=SEGMENT_COLOR, width=2)
    for box, label in zip(boxes, labels):
        corners = [tuple(p) for p in rbox_corners(box)]
        draw.polygon(corners, outline=LABEL_COLORS.get(label, LABEL_COLORS[LABEL_INDETERMINATE]), width=2)
        draw.text((corners[0][0] + 3, corners[0][1] + 3), label, fill=LABEL_COLORS.get(label))
    return img


def render_triptych(rgb: np.ndarray, raw: DepthFrame, corrected: DepthFrame) -> Image.Image:
    """Side-by-side RGB | raw depth | corrected depth, 3W x H."""
    lo, hi = depth_range([raw, corrected])
    panels = [rgb, depth_colormap(raw, lo, hi), depth_colormap(corrected, lo, hi)]
    return Image.fromarray(np.concatenate(panels, axis=1))
