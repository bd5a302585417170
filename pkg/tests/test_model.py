import math

import numpy as np
import pytest

from ballastgeom.model import (
    BiasParams,
    CoordNorm,
    DepthFrame,
    PipelineConfig,
    PixelGrid,
    RBox,
    rbox_corners,
    validate_frame,
    verdict_label,
)


def test_validate_frame_ok():
    frame = DepthFrame.from_data(np.full((480, 640), 1.0))
    assert validate_frame(frame) == []


def test_validate_frame_negative_depth():
    data = np.full((16, 16), 1.0)
    data[3, 4] = -0.5
    frame = DepthFrame(16, 16, data, np.ones((16, 16), bool))
    violations = validate_frame(frame)
    assert len(violations) == 1
    assert "non-positive" in violations[0]


def test_validate_frame_length_mismatch():
    frame = DepthFrame(16, 16, np.ones((16, 15)), np.ones((16, 15), bool))
    violations = validate_frame(frame)
    assert any("shape" in v for v in violations)


def test_validate_frame_minimum_size():
    frame = DepthFrame.from_data(np.ones((4, 4)))
    assert any("minimum" in v for v in validate_frame(frame))


def test_rbox_corners_axis_aligned():
    b = RBox(cx=10, cy=10, angle=0.0, width=4, height=2)
    expected = np.array([(8, 9), (12, 9), (12, 11), (8, 11)], dtype=float)
    assert np.allclose(rbox_corners(b), expected)


def test_rbox_corners_quarter_turn():
    b = RBox(cx=0, cy=0, angle=math.pi / 2, width=4, height=2)
    corners = rbox_corners(b)
    # a quarter turn of a 4x2 box occupies an axis-aligned 2x4 extent
    assert np.allclose(corners[:, 0].min(), -1) and np.allclose(corners[:, 0].max(), 1)
    assert np.allclose(corners[:, 1].min(), -2) and np.allclose(corners[:, 1].max(), 2)


def test_rbox_corners_rotated_round_trip():
    b = RBox(cx=5, cy=5, angle=math.pi / 6, width=2, height=2)
    corners = rbox_corners(b)
    # by-hand rotation of the (+-1, +-1) offsets with cos30 = sqrt(3)/2
    r3 = math.sqrt(3.0) / 2.0
    expected = np.array(
        [
            (5 - r3 + 0.5, 5 - 0.5 - r3),
            (5 + r3 + 0.5, 5 + 0.5 - r3),
            (5 + r3 - 0.5, 5 + 0.5 + r3),
            (5 - r3 - 0.5, 5 - 0.5 + r3),
        ]
    )
    assert np.allclose(corners, expected, atol=1e-12)
    # inverse rotation about the center recovers the axis-aligned square
    c, s = math.cos(-b.angle), math.sin(-b.angle)
    rel = corners - [b.cx, b.cy]
    back = np.column_stack([rel[:, 0] * c - rel[:, 1] * s, rel[:, 0] * s + rel[:, 1] * c])
    assert np.allclose(back, [(-1, -1), (1, -1), (1, 1), (-1, 1)], atol=1e-12)


def test_rbox_corner_mean_is_center():
    rng = np.random.default_rng(3)
    for _ in range(50):
        b = RBox(
            cx=float(rng.uniform(-100, 100)),
            cy=float(rng.uniform(-100, 100)),
            angle=float(rng.uniform(-math.pi / 2 + 1e-6, math.pi / 2)),
            width=float(rng.uniform(0.5, 200)),
            height=float(rng.uniform(0.5, 200)),
        )
        assert np.allclose(rbox_corners(b).mean(axis=0), [b.cx, b.cy], atol=1e-6)


def test_rbox_rejects_bad_angle_and_sides():
    with pytest.raises(ValueError):
        RBox(0, 0, math.pi, 1, 1)
    with pytest.raises(ValueError):
        RBox(0, 0, 0.0, -1, 1)


def test_verdict_label_pure_function():
    assert verdict_label(False, False, False) == "sufficient"
    assert verdict_label(True, False, False) == "insufficient"
    assert verdict_label(None, None, True) == "insufficient"
    assert verdict_label(None, None, None) == "sufficient"
    assert verdict_label(True, True, True, indeterminate=True) == "indeterminate"


def test_config_defaults_are_the_field_values():
    cfg = PipelineConfig()
    assert cfg.t_c == 0.3
    assert cfg.nms_iou == 0.35  # provenance record; NMS itself is upstream
    assert cfg.central_band_fraction == 0.70
    assert cfg.tau_mad == 3.5
    assert cfg.ransac_iters == 160
    assert cfg.t_res == 0.01
    assert cfg.lambda_ema == 0.2
    assert cfg.t_z == 0.03
    assert cfg.eta1 == 0.4
    assert cfg.kappa == 0.4
    assert cfg.eta2 == 0.18
    assert cfg.delta_w_px == 10.0


def test_config_validation_names_field():
    with pytest.raises(ValueError, match="kappa"):
        PipelineConfig(kappa=0.6)
    with pytest.raises(ValueError, match="lambda_ema"):
        PipelineConfig(lambda_ema=1.0)
    with pytest.raises(ValueError, match="unknown config keys"):
        PipelineConfig.from_dict({"no_such_knob": 1})


def test_config_dict_round_trip():
    cfg = PipelineConfig(t_z=0.05, box_mode="aabb", use_cy=False)
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg


def test_bias_params_validation():
    norm = CoordNorm.for_grid(PixelGrid(640, 480))
    with pytest.raises(ValueError):
        BiasParams(theta=np.array([1.0, np.inf, 0, 0, 0, 0]), norm=norm)
    with pytest.raises(ValueError):
        BiasParams(theta=np.zeros(5), norm=norm)
    with pytest.raises(ValueError):
        CoordNorm(0, 0, -1, 1)


def test_invalid_pixels_store_zero():
    data = np.array([[1.0, np.nan], [0.5, -2.0]])
    frame = DepthFrame.from_data(np.pad(data, ((0, 6), (0, 6)), constant_values=1.0))
    assert frame.validity[0, 0] and not frame.validity[0, 1] and not frame.validity[1, 1]
    assert frame.data[0, 1] == 0.0 and frame.data[1, 1] == 0.0
