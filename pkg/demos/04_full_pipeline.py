"""Walkthrough: the whole pipeline through its file interfaces.

Renders a multi-frame scene to disk, runs the CLI pipeline on it, scores the
verdicts against ground truth, and prints the method comparison table
(box mode x criteria subsets) to show what each component contributes.
"""

import json
import tempfile
from pathlib import Path

from ballastgeom.cli import main

td = Path(tempfile.mkdtemp(prefix="ballastgeom_demo_"))
scene = {
    "width": 640,
    "height": 480,
    "sleeper_pitch_px": 110.0,
    "sleeper_width_px": 14.0,
    "base_depth_m": 2.0,
    "track_angle_rad": 0.05,
    "bays": [
        {"label": "sufficient"},
        {"label": "insufficient", "depth_m": 0.05, "area_fraction": 0.55, "placement": "global"},
        {"label": "insufficient", "depth_m": 0.05, "placement": "edge_band"},
        {"label": "sufficient"},
    ],
    "theta_true": [0.02, 0.013, 0.008, -0.005, 0.004, 0.0],
    "noise_sigma_m": 0.002,
    "dropout_fraction": 0.02,
    "frame_count": 4,
    "rng_seed": 11,
    "emit_truth_votes": True,
}
(td / "scene.json").write_text(json.dumps(scene, indent=2))

methods = [
    {"box_mode": "aabb", "criteria": ["c1"]},
    {"box_mode": "aabb", "criteria": ["c1", "c2"]},
    {"box_mode": "aabb", "criteria": ["c1", "c2", "cy"]},
    {"box_mode": "rbb", "criteria": ["c1"]},
    {"box_mode": "rbb", "criteria": ["c1", "c2"]},
    {"box_mode": "rbb", "criteria": ["c1", "c2", "cy"]},
]
(td / "methods.json").write_text(json.dumps(methods, indent=2))

print(f"working directory: {td}\n\n== synth ==")
main(["synth", "--scene", str(td / "scene.json"), "--out", str(td / "data")])

print("\n== run ==")
main(["run", "--manifest", str(td / "data" / "manifest.json"), "--out", str(td / "results"), "--seed", "1"])

print("\n== eval (this run) ==")
main(["eval", "--results", str(td / "results"), "--truth", str(td / "data" / "truth.json")])

print("\n== eval (method comparison, re-running per config) ==")
main([
    "eval",
    "--manifest", str(td / "data" / "manifest.json"),
    "--truth", str(td / "data" / "truth.json"),
    "--methods", str(td / "methods.json"),
    "--seed", "1",
])

print("\n== overlay ==")
main(["overlay", "--manifest", str(td / "data" / "manifest.json"),
      "--results", str(td / "results"), "--out", str(td / "overlays")])
