import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from ballastgeom.cli import main


def scene_doc(frame_count=2, votes=True, bays=None):
    return {
        "width": 640,
        "height": 480,
        "sleeper_pitch_px": 110.0,
        "sleeper_width_px": 14.0,
        "base_depth_m": 2.0,
        "track_angle_rad": 0.05,
        "bays": bays
        or [
            {"label": "sufficient"},
            {"label": "insufficient", "depth_m": 0.05, "area_fraction": 0.5, "placement": "global"},
            {"label": "insufficient", "depth_m": 0.05, "placement": "edge_band"},
            {"label": "sufficient"},
        ],
        "theta_true": [0.02, 0.013, 0.008, -0.005, 0.004, 0.0],
        "noise_sigma_m": 0.002,
        "dropout_fraction": 0.01,
        "frame_count": frame_count,
        "rng_seed": 5,
        "emit_truth_votes": votes,
    }


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    td = tmp_path_factory.mktemp("scene")
    (td / "scene.json").write_text(json.dumps(scene_doc()))
    assert main(["synth", "--scene", str(td / "scene.json"), "--out", str(td / "data")]) == 0
    return td / "data"


def tree_hash(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestSynth:
    def test_outputs_loadable_manifest(self, synth_dir):
        assert (synth_dir / "manifest.json").exists()
        assert (synth_dir / "truth.json").exists()
        assert len(list((synth_dir / "depth").glob("*.raw"))) == 2

    def test_invalid_spec_rejected(self, tmp_path, capsys):
        doc = scene_doc()
        doc["bays"][1]["area_fraction"] = 1.5
        (tmp_path / "scene.json").write_text(json.dumps(doc))
        rc = main(["synth", "--scene", str(tmp_path / "scene.json"), "--out", str(tmp_path / "o")])
        assert rc != 0
        assert "area_fraction" in capsys.readouterr().err

    def test_frame_count_matches_files(self, tmp_path):
        (tmp_path / "scene.json").write_text(json.dumps(scene_doc(frame_count=3)))
        assert main(["synth", "--scene", str(tmp_path / "scene.json"), "--out", str(tmp_path / "o")]) == 0
        assert len(list((tmp_path / "o" / "depth").glob("*.raw"))) == 3


class TestRun:
    def test_null_scene_all_sufficient(self, tmp_path):
        doc = scene_doc(frame_count=1, votes=False, bays=[{"label": "sufficient"}] * 4)
        doc["noise_sigma_m"] = 0.0
        doc["dropout_fraction"] = 0.0
        doc["theta_true"] = [0.0] * 6
        (tmp_path / "scene.json").write_text(json.dumps(doc))
        assert main(["synth", "--scene", str(tmp_path / "scene.json"), "--out", str(tmp_path / "d")]) == 0
        assert main(["run", "--manifest", str(tmp_path / "d" / "manifest.json"), "--out", str(tmp_path / "o")]) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["labels"] == {"sufficient": 4, "insufficient": 0, "indeterminate": 0}

    def test_corrupt_depth_names_frame(self, synth_dir, tmp_path, capsys):
        import shutil

        data = tmp_path / "data"
        shutil.copytree(synth_dir, data)
        corrupt = sorted((data / "depth").glob("*.raw"))[1]
        corrupt.write_bytes(b"\x00" * 11)
        rc = main(["run", "--manifest", str(data / "manifest.json"), "--out", str(tmp_path / "o")])
        assert rc != 0
        assert "frame 1" in capsys.readouterr().err

    def test_determinism_byte_identical(self, synth_dir, tmp_path):
        args = ["run", "--manifest", str(synth_dir / "manifest.json"), "--seed", "3"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")

    def test_criteria_and_box_mode_flags(self, synth_dir, tmp_path):
        rc = main(
            [
                "run",
                "--manifest",
                str(synth_dir / "manifest.json"),
                "--out",
                str(tmp_path / "o"),
                "--box-mode",
                "aabb",
                "--criteria",
                "c1,cy",
            ]
        )
        assert rc == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["config"]["box_mode"] == "aabb"
        assert summary["config"]["use_c2"] is False
        frame0 = json.loads((tmp_path / "o" / "frames" / "frame_000000.json").read_text())
        assert frame0["regions"][0]["rbox"]["angle_rad"] == 0.0
        assert frame0["regions"][0]["gamma_max"] is None

    def test_unknown_config_key_rejected(self, synth_dir, tmp_path, capsys):
        (tmp_path / "cfg.json").write_text(json.dumps({"t_zz": 0.01}))
        rc = main(
            [
                "run",
                "--manifest",
                str(synth_dir / "manifest.json"),
                "--config",
                str(tmp_path / "cfg.json"),
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert rc != 0
        assert "t_zz" in capsys.readouterr().err


@pytest.fixture(scope="module")
def run_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("results")
    assert main(["run", "--manifest", str(synth_dir / "manifest.json"), "--out", str(out / "o")]) == 0
    return out / "o"


class TestEval:
    def test_perfect_predictions_all_ones(self, synth_dir, run_dir, capsys):
        rc = main(["eval", "--results", str(run_dir), "--truth", str(synth_dir / "truth.json")])
        assert rc == 0
        table = capsys.readouterr().out
        assert "1.0000" in table

    def test_empty_truth_errors(self, run_dir, tmp_path, capsys):
        (tmp_path / "t.json").write_text(json.dumps({"frames": []}))
        rc = main(["eval", "--results", str(run_dir), "--truth", str(tmp_path / "t.json")])
        assert rc != 0

    def test_two_methods_two_rows(self, synth_dir, run_dir, tmp_path, capsys):
        methods = [
            {"box_mode": "rbb", "criteria": ["c1"]},
            {"box_mode": "rbb", "criteria": ["c1", "c2"]},
        ]
        (tmp_path / "m.json").write_text(json.dumps(methods))
        rc = main(
            [
                "eval",
                "--results",
                str(run_dir),
                "--truth",
                str(synth_dir / "truth.json"),
                "--methods",
                str(tmp_path / "m.json"),
                "--out",
                str(tmp_path / "report.json"),
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "RBB-C1 " in out or "RBB-C1\n" in out or "RBB-C1" in out
        assert "RBB-C1-C2" in out
        report = json.loads((tmp_path / "report.json").read_text())
        assert len(report) == 2

    def test_methods_with_manifest_rerun(self, synth_dir, tmp_path, capsys):
        methods = [
            {"box_mode": "aabb", "criteria": ["c1", "c2"]},
            {"box_mode": "rbb", "criteria": ["c1", "c2", "cy"]},
        ]
        (tmp_path / "m.json").write_text(json.dumps(methods))
        rc = main(
            [
                "eval",
                "--manifest",
                str(synth_dir / "manifest.json"),
                "--truth",
                str(synth_dir / "truth.json"),
                "--methods",
                str(tmp_path / "m.json"),
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "AABB-C1-C2" in out and "RBB-C1-C2-CY" in out


class TestOverlay:
    def test_overlays_and_triptych_dimensions(self, synth_dir, run_dir, tmp_path):
        rc = main(
            [
                "overlay",
                "--manifest",
                str(synth_dir / "manifest.json"),
                "--results",
                str(run_dir),
                "--out",
                str(tmp_path / "ov"),
            ]
        )
        assert rc == 0
        with Image.open(tmp_path / "ov" / "overlay_frame_000000.png") as img:
            assert img.size == (640, 480)
        with Image.open(tmp_path / "ov" / "triptych_frame_000000.png") as img:
            assert img.size == (3 * 640, 480)

    def test_no_regions_plain_copy(self, tmp_path):
        doc = scene_doc(frame_count=1, votes=False, bays=[{"label": "sufficient"}] * 4)
        (tmp_path / "scene.json").write_text(json.dumps(doc))
        assert main(["synth", "--scene", str(tmp_path / "scene.json"), "--out", str(tmp_path / "d")]) == 0
        # strip the detections so the frame has no regions
        det_path = tmp_path / "d" / "detections" / "frame_000000.json"
        det_path.write_text(json.dumps({"frame_id": 0, "regions": []}))
        assert main(["run", "--manifest", str(tmp_path / "d" / "manifest.json"), "--out", str(tmp_path / "o")]) == 0
        assert (
            main(
                [
                    "overlay",
                    "--manifest",
                    str(tmp_path / "d" / "manifest.json"),
                    "--results",
                    str(tmp_path / "o"),
                    "--out",
                    str(tmp_path / "ov"),
                ]
            )
            == 0
        )
        with Image.open(tmp_path / "ov" / "overlay_frame_000000.png") as img:
            rendered = np.asarray(img.convert("RGB"))
        with Image.open(tmp_path / "d" / "rgb" / "frame_000000.png") as img:
            background = np.asarray(img.convert("RGB"))
        assert np.array_equal(rendered, background)

    def test_missing_results_error(self, synth_dir, tmp_path, capsys):
        rc = main(
            [
                "overlay",
                "--manifest",
                str(synth_dir / "manifest.json"),
                "--results",
                str(tmp_path / "nope"),
                "--out",
                str(tmp_path / "ov"),
            ]
        )
        assert rc != 0
        assert "missing results" in capsys.readouterr().err

    def test_overlay_determinism(self, synth_dir, run_dir, tmp_path):
        base = [
            "overlay",
            "--manifest",
            str(synth_dir / "manifest.json"),
            "--results",
            str(run_dir),
        ]
        assert main(base + ["--out", str(tmp_path / "a")]) == 0
        assert main(base + ["--out", str(tmp_path / "b")]) == 0
        assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")


class TestEvalReinterpretation:
    def test_criteria_subsets_from_stored_flags(self, synth_dir, run_dir, tmp_path, capsys):
        # no --manifest: labels for each subset re-derived from stored c1/c2/cy flags
        methods = [
            {"box_mode": "rbb", "criteria": ["c1"]},
            {"box_mode": "rbb", "criteria": ["c2"]},
            {"box_mode": "rbb", "criteria": ["cy"]},
            {"box_mode": "rbb", "criteria": ["c1", "c2", "cy"]},
        ]
        (tmp_path / "m.json").write_text(json.dumps(methods))
        rc = main(
            [
                "eval",
                "--results",
                str(run_dir),
                "--truth",
                str(synth_dir / "truth.json"),
                "--methods",
                str(tmp_path / "m.json"),
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        # votes were emitted as truth, so the CY-only row is perfect
        cy_row = [l for l in out.splitlines() if l.startswith("RBB-CY")][0]
        assert "1.0000" in cy_row
        # the edge-gap bay is invisible to C1 alone: recall drops below 1
        c1_row = [l for l in out.splitlines() if l.startswith("RBB-C1 ")][0]
        assert "0.5000" in c1_row

    def test_malformed_methods_file(self, synth_dir, run_dir, tmp_path, capsys):
        (tmp_path / "m.json").write_text(json.dumps({"not": "a list"}))
        rc = main(
            [
                "eval",
                "--results",
                str(run_dir),
                "--truth",
                str(synth_dir / "truth.json"),
                "--methods",
                str(tmp_path / "m.json"),
            ]
        )
        assert rc != 0
        assert "JSON array" in capsys.readouterr().err

    def test_eval_requires_some_input(self, synth_dir, capsys):
        rc = main(["eval", "--truth", str(synth_dir / "truth.json")])
        assert rc != 0
