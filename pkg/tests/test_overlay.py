import numpy as np

from ballastgeom.model import DepthFrame, RBox
from ballastgeom.overlay import colorize, depth_colormap, depth_range, render_overlay, render_triptych
from ballastgeom.sleepers import Segment

from conftest import constant_frame


def test_depth_range_percentiles_and_empty():
    frame = constant_frame(depth=2.0)
    lo, hi = depth_range([frame])
    assert lo <= 2.0 <= hi and hi > lo
    dead = DepthFrame(8, 8, np.zeros((8, 8)), np.zeros((8, 8), bool))
    assert depth_range([dead]) == (0.0, 1.0)


def test_colormap_marks_invalid_black():
    frame = constant_frame(depth=2.0)
    frame.validity[3, 4] = False
    rgb = depth_colormap(frame, 1.0, 3.0)
    assert rgb.shape == (48, 64, 3)
    assert tuple(rgb[3, 4]) == (0, 0, 0)
    assert tuple(rgb[0, 0]) != (0, 0, 0)


def test_colorize_endpoints_clamped():
    vals = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    rgb = colorize(vals)
    assert np.array_equal(rgb[0], rgb[1])
    assert np.array_equal(rgb[3], rgb[4])


def test_render_overlay_draws_boxes_and_lines():
    background = np.full((100, 120, 3), 30, dtype=np.uint8)
    box = RBox(cx=60, cy=50, angle=0.2, width=60, height=30)
    seg = Segment(10.0, 10.0, 110.0, 15.0, "midline")
    img = render_overlay(background, [box], ["insufficient"], [seg])
    arr = np.asarray(img)
    assert arr.shape == (100, 120, 3)
    assert (arr != 30).any()  # something was drawn


def test_triptych_layout():
    frame = constant_frame(width=40, height=30)
    rgb = np.zeros((30, 40, 3), dtype=np.uint8)
    img = render_triptych(rgb, frame, frame)
    assert img.size == (120, 30)
