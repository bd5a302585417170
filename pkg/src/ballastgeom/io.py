"""On-disk formats: frame manifests, depth rasters, detections, masks, results.

All paths inside a manifest or detections file are relative to the file's
directory. Depth rasters come in two encodings:

- ``png16``: 16-bit grayscale PNG, value 0 = invalid, depth = value * scale.
- ``raw_f32le``: 8-byte header (width, height as little-endian uint32)
  followed by width*height little-endian float32 depths in meters;
  non-finite or non-positive values are invalid.

JSON numbers are emitted with Python's shortest round-trip float repr, so
every value reloads bit-identically.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .evaluation import MethodSpec
from .model import BiasParams, DepthFrame, RegionDetection

ENC_PNG16 = "png16"
ENC_RAW_F32LE = "raw_f32le"

_HEADER = struct.Struct("<II")


def write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class FrameRecord:
    frame_id: int
    depth_path: str
    depth_encoding: str
    depth_scale: float
    detections_path: str
    rgb_path: Optional[str] = None


@dataclass
class FrameManifest:
    """Ordered frame sequence; iteration order drives the temporal smoothing."""

    records: list
    base_dir: Path

    @staticmethod
    def load(path) -> "FrameManifest":
        path = Path(path)
        doc = read_json(path)
        records = []
        prev_id = None
        for i, rec in enumerate(doc.get("frames", [])):
            try:
                record = FrameRecord(
                    frame_id=int(rec["frame_id"]),
                    depth_path=rec["depth_path"],
                    depth_encoding=rec["depth_encoding"],
                    depth_scale=float(rec["depth_scale"]),
                    detections_path=rec["detections_path"],
                    rgb_path=rec.get("rgb_path"),
                )
            except KeyError as exc:
                raise ValueError(f"manifest frame entry {i}: missing key {exc}") from exc
            if record.frame_id < 0:
                raise ValueError(f"manifest frame entry {i}: frame_id must be >= 0")
            if prev_id is not None and record.frame_id <= prev_id:
                raise ValueError(
                    f"manifest frame ids must be strictly increasing ({prev_id} then {record.frame_id})"
                )
            if record.depth_scale <= 0:
                raise ValueError(f"frame {record.frame_id}: depth_scale must be positive")
            if record.depth_encoding not in (ENC_PNG16, ENC_RAW_F32LE):
                raise ValueError(
                    f"frame {record.frame_id}: unknown depth encoding {record.depth_encoding!r}"
                )
            prev_id = record.frame_id
            records.append(record)
        if not records:
            raise ValueError(f"manifest {path} lists no frames")
        return FrameManifest(records=records, base_dir=path.parent)

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel


def write_manifest(records: list, path) -> None:
    doc = {
        "frames": [
            {
                "frame_id": r.frame_id,
                "depth_path": r.depth_path,
                "depth_encoding": r.depth_encoding,
                "depth_scale": r.depth_scale,
                "detections_path": r.detections_path,
                **({"rgb_path": r.rgb_path} if r.rgb_path else {}),
            }
            for r in records
        ]
    }
    write_json(doc, path)


def load_depth(path, encoding: str, scale: float) -> DepthFrame:
    path = Path(path)
    if encoding == ENC_PNG16:
        with Image.open(path) as img:
            arr = np.asarray(img)
        if arr.ndim != 2:
            raise ValueError(f"{path}: expected single-channel depth PNG, got shape {arr.shape}")
        validity = arr > 0
        return DepthFrame.from_data(arr.astype(np.float64) * scale, validity)
    if encoding == ENC_RAW_F32LE:
        blob = path.read_bytes()
        if len(blob) < _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        w, h = _HEADER.unpack_from(blob)
        expected = _HEADER.size + 4 * w * h
        if len(blob) != expected:
            raise ValueError(
                f"{path}: length mismatch, header says {w}x{h} ({expected} bytes) but file has {len(blob)}"
            )
        arr = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(h, w).astype(np.float64)
        validity = np.isfinite(arr) & (arr > 0.0)
        return DepthFrame.from_data(arr, validity)
    raise ValueError(f"unknown depth encoding {encoding!r}")


def write_depth(frame: DepthFrame, path, encoding: str, scale: float = 0.001) -> None:
    path = Path(path)
    if encoding == ENC_PNG16:
        q = np.rint(frame.data / scale)
        q = np.clip(q, 0, 65535).astype(np.uint16)
        # value 0 is the invalid sentinel; clamp tiny valid depths up to 1
        q = np.where(frame.validity, np.maximum(q, 1), 0).astype(np.uint16)
        Image.fromarray(q).save(path, format="PNG")
        return
    if encoding == ENC_RAW_F32LE:
        data = np.where(frame.validity, frame.data, 0.0).astype("<f4")
        path.write_bytes(_HEADER.pack(frame.width, frame.height) + data.tobytes())
        return
    raise ValueError(f"unknown depth encoding {encoding!r}")


def load_mask(path, expected_size: Optional[tuple] = None) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[:, :, 0]
    mask = arr != 0
    if expected_size is not None and mask.shape != (expected_size[1], expected_size[0]):
        raise ValueError(
            f"{path}: mask is {mask.shape[1]}x{mask.shape[0]}, frame is {expected_size[0]}x{expected_size[1]}"
        )
    return mask


def write_mask(mask: np.ndarray, path) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path, format="PNG")


def _clamp_detection(rec_id: str, cx, cy, w, h, size) -> tuple:
    width, height = size
    x0, x1 = max(cx - w / 2.0, 0.0), min(cx + w / 2.0, width - 1.0)
    y0, y1 = max(cy - h / 2.0, 0.0), min(cy + h / 2.0, height - 1.0)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"region {rec_id}: box lies entirely outside the frame")
    return (x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0


def load_detections(path, frame_size: Optional[tuple] = None) -> tuple[int, list]:
    """Read one frame's detections file: (frame_id, regions in file order).

    When frame_size is given, boxes are clamped to the frame and region masks
    are checked against the frame dimensions and box support.
    """
    path = Path(path)
    doc = read_json(path)
    frame_id = int(doc["frame_id"])
    regions: list[RegionDetection] = []
    for rec in doc.get("regions", []):
        rid = str(rec["id"])
        cx, cy, w, h = float(rec["cx"]), float(rec["cy"]), float(rec["w"]), float(rec["h"])
        if frame_size is not None:
            cx, cy, w, h = _clamp_detection(rid, cx, cy, w, h, frame_size)
        mask = None
        if rec.get("mask_path"):
            mask = load_mask(path.parent / rec["mask_path"], frame_size)
            ys, xs = np.nonzero(mask)
            if xs.size:
                in_box = (
                    (xs >= cx - w / 2 - 0.5)
                    & (xs <= cx + w / 2 + 0.5)
                    & (ys >= cy - h / 2 - 0.5)
                    & (ys <= cy + h / 2 + 0.5)
                )
                if not in_box.any():
                    raise ValueError(f"region {rid}: mask support does not intersect its box")
        vote = rec.get("insufficient_vote")
        regions.append(
            RegionDetection(
                region_id=rid,
                cx=cx,
                cy=cy,
                w=w,
                h=h,
                confidence=float(rec["confidence"]),
                mask=mask,
                insufficient_vote=None if vote is None else bool(vote),
            )
        )
    return frame_id, regions


def write_detections(frame_id: int, regions: list, path) -> None:
    """Inverse of load_detections for records whose masks are already on disk.

    Each entry of ``regions`` is a dict with the detection fields plus an
    optional mask_path (relative to the detections file).
    """
    write_json({"frame_id": frame_id, "regions": regions}, path)


def write_frame_result(frame_id: int, verdicts: list, smoothed_theta: BiasParams, path) -> None:
    """Per-frame output: smoothed coefficients plus one record per region."""
    doc = {
        "frame_id": frame_id,
        "theta": [float(t) for t in smoothed_theta.theta],
        "norm": {
            "x_offset": smoothed_theta.norm.x_offset,
            "y_offset": smoothed_theta.norm.y_offset,
            "x_scale": smoothed_theta.norm.x_scale,
            "y_scale": smoothed_theta.norm.y_scale,
        },
        "regions": [
            {
                "id": v.region_id,
                "label": v.label,
                "rho": v.rho,
                "gamma_max": v.gamma_max,
                "c1": v.c1_fired,
                "c2": v.c2_fired,
                "cy": v.cy_fired,
                "rbox": {
                    "cx": v.rbox.cx,
                    "cy": v.rbox.cy,
                    "angle_rad": v.rbox.angle,
                    "w": v.rbox.width,
                    "h": v.rbox.height,
                },
            }
            for v in verdicts
        ],
    }
    write_json(doc, path)


def load_frame_result(path) -> dict:
    return read_json(path)


def write_truth(truth: dict, path) -> None:
    """Ground-truth labels keyed (frame_id, region_id), grouped per frame."""
    by_frame: dict = {}
    for (fid, rid), label in truth.items():
        by_frame.setdefault(int(fid), {})[str(rid)] = label
    doc = {
        "frames": [
            {"frame_id": fid, "regions": {rid: by_frame[fid][rid] for rid in sorted(by_frame[fid])}}
            for fid in sorted(by_frame)
        ]
    }
    write_json(doc, path)


def load_truth(path) -> dict:
    doc = read_json(path)
    truth = {}
    for frame in doc.get("frames", []):
        fid = int(frame["frame_id"])
        for rid, label in frame.get("regions", {}).items():
            truth[(fid, str(rid))] = label
    if not truth:
        raise ValueError(f"truth file {path} holds no labels")
    return truth


def load_methods(path) -> list:
    doc = read_json(path)
    if not isinstance(doc, list):
        raise ValueError("methods file must be a JSON array")
    return [
        MethodSpec(
            box_mode=rec["box_mode"],
            criteria=frozenset(rec["criteria"]),
            name=rec.get("name"),
        )
        for rec in doc
    ]
