"""Scoring of predicted verdicts against ground truth and method comparison tables.

The positive class is "insufficient" (missing it is the safety-critical
failure). Indeterminate predictions never enter the confusion matrix; they
are counted separately so data-quality failures stay visible instead of
biasing the metrics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .model import (
    LABEL_INDETERMINATE,
    LABEL_INSUFFICIENT,
    LABEL_SUFFICIENT,
    PipelineConfig,
)

CRITERIA = ("c1", "c2", "cy")


class MissingTruthError(ValueError):
    """Prediction/truth key sets do not match."""

    def __init__(self, missing_truth, missing_pred):
        self.missing_truth = sorted(missing_truth)
        self.missing_pred = sorted(missing_pred)
        parts = []
        if self.missing_truth:
            parts.append(f"predictions without truth: {self.missing_truth}")
        if self.missing_pred:
            parts.append(f"truth without predictions: {self.missing_pred}")
        super().__init__("; ".join(parts))


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int
    indeterminate: int
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "indeterminate": self.indeterminate,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def f1_from_pr(precision: Optional[float], recall: Optional[float]) -> Optional[float]:
    """Harmonic mean of precision and recall; None when undefined."""
    if precision is None or recall is None or precision + recall == 0.0:
        return None
    return 2.0 * precision * recall / (precision + recall)


def score(predictions: Mapping, truth: Mapping) -> EvalReport:
    """Confusion counts and P/R/F1 over (frame_id, region_id)-keyed labels.

    F1 is computed from the integer counts (2TP / (2TP + FP + FN)), which is
    algebraically the harmonic-mean formula but exact when P equals R.
    """
    pred_keys = set(predictions)
    truth_keys = set(truth)
    if pred_keys != truth_keys:
        raise MissingTruthError(pred_keys - truth_keys, truth_keys - pred_keys)

    tp = fp = fn = tn = indeterminate = 0
    for key in predictions:
        p = predictions[key]
        t = truth[key]
        if t not in (LABEL_SUFFICIENT, LABEL_INSUFFICIENT):
            raise ValueError(f"truth label for {key} must be sufficient/insufficient, got {t!r}")
        if p == LABEL_INDETERMINATE:
            indeterminate += 1
            continue
        if p not in (LABEL_SUFFICIENT, LABEL_INSUFFICIENT):
            raise ValueError(f"prediction for {key} has unknown label {p!r}")
        if p == LABEL_INSUFFICIENT:
            if t == LABEL_INSUFFICIENT:
                tp += 1
            else:
                fp += 1
        else:
            if t == LABEL_INSUFFICIENT:
                fn += 1
            else:
                tn += 1

    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0.0:
        f1 = 2 * tp / (2 * tp + fp + fn)
    return EvalReport(tp, fp, fn, tn, indeterminate, precision, recall, f1)


@dataclass(frozen=True)
class MethodSpec:
    """One comparison row: a box mode plus the enabled criteria subset."""

    box_mode: str
    criteria: frozenset
    name: Optional[str] = None

    def __post_init__(self) -> None:
        bad = set(self.criteria) - set(CRITERIA)
        if bad:
            raise ValueError(f"unknown criteria: {sorted(bad)}")
        if not self.criteria:
            raise ValueError("method needs at least one criterion")
        object.__setattr__(self, "criteria", frozenset(self.criteria))

    @property
    def display_name(self) -> str:
        if self.name:
            return self.name
        tags = "-".join(c.upper() for c in CRITERIA if c in self.criteria)
        return f"{self.box_mode.upper()}-{tags}"

    def apply_to(self, cfg: PipelineConfig) -> PipelineConfig:
        return cfg.with_overrides(
            box_mode=self.box_mode,
            use_c1="c1" in self.criteria,
            use_c2="c2" in self.criteria,
            use_cy="cy" in self.criteria,
        )


@dataclass
class MethodRow:
    spec: MethodSpec
    report: EvalReport
    labels: dict  # (frame_id, region_id) -> predicted label

    @property
    def name(self) -> str:
        return self.spec.display_name


def labels_from_results(results: Iterable) -> dict:
    out = {}
    for res in results:
        for v in res.verdicts:
            out[(res.frame_id, v.region_id)] = v.label
    return out


def compare_methods(
    frame_tuples: list, truth: Mapping, base_cfg: PipelineConfig, methods: list
) -> list[MethodRow]:
    """Run the full pipeline once per method config over the same frames.

    Raises on any OR-rule monotonicity violation between nested criteria sets
    (adding a criterion must never flip a region back to sufficient).
    """
    from . import pipeline as pipeline_mod

    rows: list[MethodRow] = []
    for spec in methods:
        cfg = spec.apply_to(base_cfg)
        results = pipeline_mod.run_frames(frame_tuples, cfg)
        labels = labels_from_results(results)
        rows.append(MethodRow(spec=spec, report=score(labels, truth), labels=labels))
    violations = check_or_monotonicity(rows)
    if violations:
        raise AssertionError("OR-rule monotonicity violated: " + "; ".join(violations))
    return rows


def check_or_monotonicity(rows: list) -> list[str]:
    """Violations of OR-rule monotonicity between nested method rows.

    For two methods with the same box mode where one's criteria set contains
    the other's, every region the smaller set calls insufficient must stay
    insufficient under the larger set (on regions determinate under both),
    and recall must not decrease.
    """
    violations: list[str] = []
    for small in rows:
        for big in rows:
            if small is big or small.spec.box_mode != big.spec.box_mode:
                continue
            if not (small.spec.criteria < big.spec.criteria):
                continue
            for key, lab in small.labels.items():
                blab = big.labels.get(key)
                if LABEL_INDETERMINATE in (lab, blab):
                    continue
                if lab == LABEL_INSUFFICIENT and blab != LABEL_INSUFFICIENT:
                    violations.append(
                        f"{big.name} lost insufficient region {key} present under {small.name}"
                    )
            r_small = small.report.recall
            r_big = big.report.recall
            if r_small is not None and r_big is not None and r_big < r_small - 1e-12:
                violations.append(
                    f"recall dropped from {r_small:.4f} ({small.name}) to {r_big:.4f} ({big.name})"
                )
    return violations


def format_table(rows: list) -> str:
    """Aligned plain-text comparison table, one row per method."""
    header = ("Method", "Precision", "Recall", "F1", "TP", "FP", "FN", "TN", "Indet")

    def fmt(x) -> str:
        return "-" if x is None else (f"{x:.4f}" if isinstance(x, float) else str(x))

    body = [
        (
            row.name,
            fmt(row.report.precision),
            fmt(row.report.recall),
            fmt(row.report.f1),
            fmt(row.report.tp),
            fmt(row.report.fp),
            fmt(row.report.fn),
            fmt(row.report.tn),
            fmt(row.report.indeterminate),
        )
        for row in rows
    ]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = []
    for r in [header] + body:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines)
