"""Command-line front end: run, synth, eval, overlay subcommands."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import bias as bias_mod
from . import evaluation, io, overlay, pipeline, synth
from .model import (
    BiasParams,
    CoordNorm,
    LABEL_INDETERMINATE,
    LABEL_INSUFFICIENT,
    LABEL_SUFFICIENT,
    PipelineConfig,
    RBox,
)

_CRITERIA_CHOICES = ("c1", "c2", "cy")


class CliError(Exception):
    """Fatal CLI failure carrying a user-facing message."""


def _load_config(args) -> PipelineConfig:
    if getattr(args, "config", None):
        doc = io.read_json(args.config)
        try:
            cfg = PipelineConfig.from_dict(doc)
        except (TypeError, ValueError) as exc:
            raise CliError(f"config {args.config}: {exc}") from exc
    else:
        cfg = PipelineConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    if getattr(args, "box_mode", None):
        overrides["box_mode"] = args.box_mode
    if getattr(args, "criteria", None):
        chosen = _parse_criteria(args.criteria)
        overrides.update(
            use_c1="c1" in chosen, use_c2="c2" in chosen, use_cy="cy" in chosen
        )
    if overrides:
        try:
            cfg = cfg.with_overrides(**overrides)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
    return cfg


def _parse_criteria(raw: str) -> set:
    chosen = {c.strip().lower() for c in raw.split(",") if c.strip()}
    bad = chosen - set(_CRITERIA_CHOICES)
    if bad:
        raise CliError(f"unknown criteria {sorted(bad)}; choose from {','.join(_CRITERIA_CHOICES)}")
    if not chosen:
        raise CliError("--criteria must name at least one of c1,c2,cy")
    return chosen


def _iter_manifest_frames(manifest: io.FrameManifest):
    for rec in manifest.records:
        try:
            frame = io.load_depth(
                manifest.resolve(rec.depth_path), rec.depth_encoding, rec.depth_scale
            )
            fid, dets = io.load_detections(
                manifest.resolve(rec.detections_path), frame_size=(frame.width, frame.height)
            )
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"frame {rec.frame_id}: {exc}") from exc
        if fid != rec.frame_id:
            raise CliError(
                f"frame {rec.frame_id}: detections file declares frame_id {fid}"
            )
        yield rec.frame_id, frame, dets


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    manifest = io.FrameManifest.load(args.manifest)
    out = Path(args.out)
    (out / "frames").mkdir(parents=True, exist_ok=True)

    diag_lines = []
    label_counts = {LABEL_SUFFICIENT: 0, LABEL_INSUFFICIENT: 0, LABEL_INDETERMINATE: 0}
    region_total = 0

    def on_frame(res: pipeline.FrameResult) -> None:
        nonlocal region_total
        theta = res.theta
        if theta is None:
            # no fit ever succeeded: record a zero surface for this frame
            theta = BiasParams.zero(res.norm)
        io.write_frame_result(
            res.frame_id, res.verdicts, theta, out / "frames" / f"frame_{res.frame_id:06d}.json"
        )
        diag_lines.append(
            json.dumps(
                {
                    "frame_id": res.frame_id,
                    "fit_ok": res.fit_ok,
                    "sample_count": res.sample_count,
                    "inlier_count": res.inlier_count,
                    "rms": res.rms,
                    "theta_raw": None if res.theta_raw is None else [float(t) for t in res.theta_raw.theta],
                    "theta": [float(t) for t in theta.theta],
                }
            )
        )
        for v in res.verdicts:
            label_counts[v.label] += 1
            region_total += 1

    pipeline.run_frames(_iter_manifest_frames(manifest), cfg, on_frame=on_frame)

    (out / "diagnostics.jsonl").write_text("\n".join(diag_lines) + "\n", encoding="utf-8")
    io.write_json(
        {
            "frames": len(manifest.records),
            "regions": region_total,
            "labels": label_counts,
            "config": cfg.to_dict(),
        },
        out / "summary.json",
    )
    print(
        f"processed {len(manifest.records)} frames, {region_total} regions "
        f"({label_counts[LABEL_INSUFFICIENT]} insufficient, "
        f"{label_counts[LABEL_INDETERMINATE]} indeterminate)"
    )
    return 0


def _cmd_synth(args) -> int:
    try:
        spec = synth.scene_spec_from_dict(io.read_json(args.scene))
        scene = synth.render_scene(spec)
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(f"scene spec {args.scene}: {exc}") from exc

    out = Path(args.out)
    for sub in ("depth", "detections", "masks", "rgb"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    encoding = args.encoding
    ext = "png" if encoding == io.ENC_PNG16 else "raw"
    scale = 0.001

    for region in scene.regions:
        io.write_mask(region.detection.mask, out / "masks" / f"{region.region_id}.png")

    records = []
    for frame in scene.frames:
        stem = f"frame_{frame.frame_id:06d}"
        io.write_depth(frame.raw, out / "depth" / f"{stem}.{ext}", encoding, scale)
        Image.fromarray(scene.rgb).save(out / "rgb" / f"{stem}.png", format="PNG")
        io.write_detections(
            frame.frame_id,
            [
                {
                    "id": r.region_id,
                    "cx": r.detection.cx,
                    "cy": r.detection.cy,
                    "w": r.detection.w,
                    "h": r.detection.h,
                    "confidence": r.detection.confidence,
                    "mask_path": f"../masks/{r.region_id}.png",
                    **(
                        {"insufficient_vote": r.detection.insufficient_vote}
                        if r.detection.insufficient_vote is not None
                        else {}
                    ),
                }
                for r in scene.regions
            ],
            out / "detections" / f"{stem}.json",
        )
        records.append(
            io.FrameRecord(
                frame_id=frame.frame_id,
                depth_path=f"depth/{stem}.{ext}",
                depth_encoding=encoding,
                depth_scale=scale if encoding == io.ENC_PNG16 else 1.0,
                detections_path=f"detections/{stem}.json",
                rgb_path=f"rgb/{stem}.png",
            )
        )
    io.write_manifest(records, out / "manifest.json")
    io.write_truth(scene.truth, out / "truth.json")
    io.write_json(
        {
            "theta_true": [float(t) for t in scene.theta_true.theta],
            "spec": synth.scene_spec_to_dict(spec),
        },
        out / "scene.json",
    )
    print(f"rendered {len(scene.frames)} frames, {len(scene.regions)} regions per frame -> {out}")
    return 0


def _load_result_labels(results_dir: Path) -> tuple[dict, list]:
    frames_dir = results_dir / "frames"
    files = sorted(frames_dir.glob("frame_*.json"))
    if not files:
        raise CliError(f"no frame results under {frames_dir}")
    labels = {}
    docs = []
    for f in files:
        doc = io.load_frame_result(f)
        docs.append(doc)
        for region in doc["regions"]:
            labels[(doc["frame_id"], str(region["id"]))] = region["label"]
    return labels, docs


def _reinterpret_labels(docs: list, criteria: frozenset) -> dict:
    """Re-derive labels for a criteria subset from the stored per-criterion flags."""
    labels = {}
    geom_needed = bool({"c1", "c2"} & criteria)
    for doc in docs:
        for region in doc["regions"]:
            key = (doc["frame_id"], str(region["id"]))
            flags = {c: region[c] for c in ("c1", "c2", "cy")}
            geom_missing = geom_needed and any(
                flags[c] is None for c in ("c1", "c2") if c in criteria
            )
            if geom_missing:
                if "cy" in criteria and region["label"] != LABEL_INDETERMINATE:
                    # the stored run itself fell back to the external vote
                    labels[key] = LABEL_INSUFFICIENT if flags["cy"] else LABEL_SUFFICIENT
                else:
                    labels[key] = LABEL_INDETERMINATE
            else:
                fired = any(bool(flags[c]) for c in criteria if flags[c] is not None)
                labels[key] = LABEL_INSUFFICIENT if fired else LABEL_SUFFICIENT
    return labels


def _cmd_eval(args) -> int:
    truth = io.load_truth(args.truth)
    methods = io.load_methods(args.methods) if args.methods else None

    if methods and args.manifest:
        cfg = _load_config(args)
        manifest = io.FrameManifest.load(args.manifest)
        frames = list(_iter_manifest_frames(manifest))
        try:
            rows = evaluation.compare_methods(frames, truth, cfg, methods)
        except evaluation.MissingTruthError as exc:
            raise CliError(str(exc)) from exc
    elif methods:
        if not args.results:
            raise CliError("--methods needs either --results (criteria subsets) or --manifest (full re-run)")
        results_dir = Path(args.results)
        _, docs = _load_result_labels(results_dir)
        summary_path = results_dir / "summary.json"
        run_box_mode = "rbb"
        if summary_path.exists():
            run_box_mode = io.read_json(summary_path)["config"]["box_mode"]
        rows = []
        for spec in methods:
            if spec.box_mode != run_box_mode:
                raise CliError(
                    f"method {spec.display_name}: results were produced with box_mode="
                    f"{run_box_mode}; pass --manifest to re-run other box modes"
                )
            labels = _reinterpret_labels(docs, spec.criteria)
            try:
                report = evaluation.score(labels, truth)
            except evaluation.MissingTruthError as exc:
                raise CliError(str(exc)) from exc
            rows.append(evaluation.MethodRow(spec=spec, report=report, labels=labels))
        violations = evaluation.check_or_monotonicity(rows)
        if violations:
            raise CliError("OR-rule monotonicity violated: " + "; ".join(violations))
    else:
        if not args.results:
            raise CliError("eval needs --results (or --methods with --manifest)")
        labels, _ = _load_result_labels(Path(args.results))
        try:
            report = evaluation.score(labels, truth)
        except evaluation.MissingTruthError as exc:
            raise CliError(str(exc)) from exc
        spec = evaluation.MethodSpec(box_mode="rbb", criteria=frozenset(["c1"]), name="results")
        rows = [evaluation.MethodRow(spec=spec, report=report, labels=labels)]

    print(evaluation.format_table(rows))
    if args.out:
        io.write_json(
            [{"method": row.name, **row.report.as_dict()} for row in rows], args.out
        )
    return 0


def _cmd_overlay(args) -> int:
    manifest = io.FrameManifest.load(args.manifest)
    results_dir = Path(args.results)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    summary_path = results_dir / "summary.json"
    cfg = PipelineConfig()
    if summary_path.exists():
        cfg = PipelineConfig.from_dict(io.read_json(summary_path)["config"])

    for rec in manifest.records:
        result_path = results_dir / "frames" / f"frame_{rec.frame_id:06d}.json"
        if not result_path.exists():
            raise CliError(f"missing results for frame {rec.frame_id}: {result_path}")
        doc = io.load_frame_result(result_path)
        raw = io.load_depth(manifest.resolve(rec.depth_path), rec.depth_encoding, rec.depth_scale)

        params = BiasParams(
            theta=np.array(doc["theta"], dtype=np.float64),
            norm=CoordNorm(**doc["norm"]),
        )
        corrected = bias_mod.apply_correction(raw, params)

        boxes = []
        labels = []
        for region in doc["regions"]:
            rb = region["rbox"]
            boxes.append(
                RBox(cx=rb["cx"], cy=rb["cy"], angle=rb["angle_rad"], width=rb["w"], height=rb["h"])
            )
            labels.append(region["label"])
        segments = pipeline.sampling_segments(boxes, raw.grid, cfg) if boxes else []

        if rec.rgb_path:
            with Image.open(manifest.resolve(rec.rgb_path)) as img:
                background = np.asarray(img.convert("RGB"))
        else:
            lo, hi = overlay.depth_range([raw])
            background = overlay.depth_colormap(raw, lo, hi)

        stem = f"frame_{rec.frame_id:06d}"
        overlay.render_overlay(background, boxes, labels, segments).save(
            out / f"overlay_{stem}.png", format="PNG"
        )
        overlay.render_triptych(background, raw, corrected).save(
            out / f"triptych_{stem}.png", format="PNG"
        )
    print(f"wrote overlays for {len(manifest.records)} frames -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ballastgeom",
        description="Depth-geometry ballast sufficiency pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process a frame manifest and write per-frame verdicts")
    run.add_argument("--manifest", required=True)
    run.add_argument("--config", help="pipeline config JSON (defaults when omitted)")
    run.add_argument("--out", required=True)
    run.add_argument("--seed", type=int, help="override rng_seed")
    run.add_argument("--box-mode", choices=("aabb", "rbb"), dest="box_mode")
    run.add_argument("--criteria", help="comma-separated subset of c1,c2,cy")

    sy = sub.add_parser("synth", help="render a synthetic scene to pipeline input files")
    sy.add_argument("--scene", required=True, help="scene spec JSON")
    sy.add_argument("--out", required=True)
    sy.add_argument(
        "--encoding", choices=(io.ENC_RAW_F32LE, io.ENC_PNG16), default=io.ENC_RAW_F32LE
    )

    ev = sub.add_parser("eval", help="score results against ground truth")
    ev.add_argument("--results")
    ev.add_argument("--truth", required=True)
    ev.add_argument("--methods", help="methods JSON for a comparison table")
    ev.add_argument("--manifest", help="re-run the pipeline per method over this manifest")
    ev.add_argument("--config", help="base config for --manifest re-runs")
    ev.add_argument("--seed", type=int, help="override rng_seed for re-runs")
    ev.add_argument("--out", help="write the report rows as JSON")

    ov = sub.add_parser("overlay", help="render verdict overlays and depth triptychs")
    ov.add_argument("--manifest", required=True)
    ov.add_argument("--results", required=True)
    ov.add_argument("--out", required=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "synth": _cmd_synth,
        "eval": _cmd_eval,
        "overlay": _cmd_overlay,
    }
    try:
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
