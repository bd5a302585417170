import math

import numpy as np
import pytest

from ballastgeom.model import DepthFrame, RBox


def render_rect_mask(cx, cy, angle, w, h, shape):
    """Rasterize a rotated rectangle: pixel on iff its center lies inside."""
    height, width = shape
    xs = np.arange(width, dtype=float)[None, :]
    ys = np.arange(height, dtype=float)[:, None]
    c, s = math.cos(angle), math.sin(angle)
    u = (xs - cx) * c + (ys - cy) * s
    v = -(xs - cx) * s + (ys - cy) * c
    return (np.abs(u) <= w / 2) & (np.abs(v) <= h / 2)


def constant_frame(width=64, height=48, depth=2.0):
    return DepthFrame.from_data(np.full((height, width), depth))


def shifted_frame(frame, offset):
    """Frame with a constant added to every valid depth."""
    data = np.where(frame.validity, frame.data + offset, frame.data)
    return DepthFrame(frame.width, frame.height, data, frame.validity.copy())


@pytest.fixture
def axis_box():
    return RBox(cx=30.0, cy=20.0, angle=0.0, width=40.0, height=20.0)
