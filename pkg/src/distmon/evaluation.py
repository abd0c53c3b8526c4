"""Evaluation against reference depth: per-pair distance MAE and
per-risk-class precision / recall / F1.

Predictions and references are matched exactly on (frame_id, id_a,
id_b); both sides are derived from the same mask files so the ids align
by construction.  The below-range MAE column filters on the reference
distance (the ground truth), inclusive.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import math

import numpy as np

from .distancing import PairDistance, Risk, RiskThresholds, classify_risk, measure_frame
from .errors import NoMatchedPairs, NoValidDepth
from .geometry import CameraIntrinsics
from .people import instance_ids, localize_person
from .scaling import INVALID_DEPTH
from .validation import check_label_mask, check_map

PairSet = Mapping[str, Sequence[PairDistance]] | Sequence[PairDistance]


@dataclass(frozen=True)
class ClassMetrics:
    """Precision/recall/F1 for one risk class; 0/0 cells are reported
    as 0.0 and listed in ``undefined``."""

    precision: float
    recall: float
    f1: float
    undefined: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "undefined": sorted(self.undefined),
        }


@dataclass(frozen=True)
class EvalSummary:
    mae_any: float
    mae_below: float | None
    max_ref_distance: float
    per_class: dict[Risk, ClassMetrics]
    pair_count: int
    pair_count_below: int
    dropped_instances: int = 0

    def to_dict(self) -> dict:
        return {
            "mae_any": self.mae_any,
            "mae_below": self.mae_below,
            "max_ref_distance": self.max_ref_distance,
            "pair_count": self.pair_count,
            "pair_count_below": self.pair_count_below,
            "dropped_instances": self.dropped_instances,
            "classes": {
                risk.value: metrics.to_dict()
                for risk, metrics in self.per_class.items()
            },
        }


def reference_distances(
    mask: np.ndarray,
    ref: np.ndarray,
    k: CameraIntrinsics,
    t: RiskThresholds = RiskThresholds(),
    min_pixels: int = 1,
) -> tuple[list[PairDistance], list[int]]:
    """Pairwise distances computed from a reference depth map.

    Runs the identical centroid + back-projection + pairwise procedure
    as the pipeline but sources depth from ``ref`` (0.0 marks
    unmeasured pixels, which the centroid fallback skips).  Instances
    without any valid reference depth are dropped; their ids are
    returned alongside the pairs.
    """
    mask = check_label_mask(mask)
    ref = check_map(ref, "ref")
    if (ref < INVALID_DEPTH).any():
        raise ValueError("reference depth values must be >= 0")
    persons = []
    dropped = []
    for iid in instance_ids(mask, min_pixels):
        try:
            persons.append(localize_person(mask, iid, ref, k))
        except NoValidDepth:
            dropped.append(iid)
    return measure_frame(persons, t), dropped


def _as_frame_mapping(pairs: PairSet) -> dict[str, Sequence[PairDistance]]:
    if isinstance(pairs, Mapping):
        return {str(k): v for k, v in pairs.items()}
    return {"": pairs}


def match_pairs(
    predicted: PairSet, reference: PairSet
) -> list[tuple[float, float]]:
    """(predicted, reference) distances for pairs present in both sets,
    matched on (frame_id, id_a, id_b), in deterministic key order."""
    pred_frames = _as_frame_mapping(predicted)
    ref_frames = _as_frame_mapping(reference)
    matched = []
    for frame_id in sorted(set(pred_frames) & set(ref_frames)):
        ref_index = {
            (p.id_a, p.id_b): p.distance for p in ref_frames[frame_id]
        }
        for pair in sorted(pred_frames[frame_id], key=lambda p: (p.id_a, p.id_b)):
            key = (pair.id_a, pair.id_b)
            if key in ref_index:
                matched.append((pair.distance, ref_index[key]))
    return matched


def compute_mae(
    predicted: PairSet,
    reference: PairSet,
    max_ref_distance: float | None = None,
) -> float:
    """Mean absolute error over matched pairs.

    When ``max_ref_distance`` is given, only pairs whose reference
    distance is <= that bound (inclusive) are counted.  Raises
    ``NoMatchedPairs`` when nothing remains.
    """
    matched = match_pairs(predicted, reference)
    if max_ref_distance is not None:
        matched = [(p, r) for p, r in matched if r <= max_ref_distance]
    if not matched:
        raise NoMatchedPairs("no pairs matched between prediction and reference")
    return math.fsum(abs(p - r) for p, r in matched) / len(matched)


def _prf_cell(numerator: int, denominator: int, name: str, undefined: list[str]):
    if denominator == 0:
        undefined.append(name)
        return 0.0
    return numerator / denominator


def compute_prf(
    predicted: PairSet,
    reference: PairSet,
    t: RiskThresholds = RiskThresholds(),
) -> dict[Risk, ClassMetrics]:
    """Per-class precision, recall and F1 over matched pairs.

    Classes are re-derived from both distances with the same thresholds
    so prediction and reference are always comparable.  Any 0/0 cell is
    reported as 0 and flagged as undefined.
    """
    matched = match_pairs(predicted, reference)
    if not matched:
        raise NoMatchedPairs("no pairs matched between prediction and reference")
    labels = [(classify_risk(p, t), classify_risk(r, t)) for p, r in matched]
    out = {}
    for risk in Risk:
        tp = sum(1 for p, r in labels if p == risk and r == risk)
        fp = sum(1 for p, r in labels if p == risk and r != risk)
        fn = sum(1 for p, r in labels if p != risk and r == risk)
        undefined: list[str] = []
        precision = _prf_cell(tp, tp + fp, "precision", undefined)
        recall = _prf_cell(tp, tp + fn, "recall", undefined)
        if precision + recall == 0:
            f1 = _prf_cell(0, 0, "f1", undefined)
        else:
            f1 = 2 * precision * recall / (precision + recall)
        out[risk] = ClassMetrics(
            precision=precision, recall=recall, f1=f1, undefined=tuple(undefined)
        )
    return out


def summarize(
    predicted: PairSet,
    reference: PairSet,
    max_ref_distance: float = 3.0,
    t: RiskThresholds = RiskThresholds(),
    dropped_instances: int = 0,
) -> EvalSummary:
    """Full evaluation: unconstrained and below-range MAE plus per-class
    precision/recall/F1."""
    matched = match_pairs(predicted, reference)
    if not matched:
        raise NoMatchedPairs("no pairs matched between prediction and reference")
    below = [(p, r) for p, r in matched if r <= max_ref_distance]
    mae_any = math.fsum(abs(p - r) for p, r in matched) / len(matched)
    mae_below = (
        math.fsum(abs(p - r) for p, r in below) / len(below) if below else None
    )
    return EvalSummary(
        mae_any=mae_any,
        mae_below=mae_below,
        max_ref_distance=max_ref_distance,
        per_class=compute_prf(predicted, reference, t),
        pair_count=len(matched),
        pair_count_below=len(below),
        dropped_instances=dropped_instances,
    )


def render_tables(summary: EvalSummary) -> str:
    """Plain-text tables mirroring the MAE and risk-class layouts."""
    def cell(value: float | None, undefined: bool = False) -> str:
        if value is None or undefined:
            return "    x"
        return f"{value:5.2f}"

    lines = []
    lines.append("Inter-personal distance MAE (m)")
    lines.append(f"  pairs      : {summary.pair_count}")
    lines.append(f"  any range  : {summary.mae_any:.3f}")
    label = f"  <= {summary.max_ref_distance:.1f} m   :"
    if summary.mae_below is None:
        lines.append(f"{label} x (no pairs in range)")
    else:
        lines.append(f"{label} {summary.mae_below:.3f} ({summary.pair_count_below} pairs)")
    lines.append("")
    lines.append("Risk classification")
    lines.append("  class          P      R      F")
    for risk in (Risk.SAFE, Risk.RISKY, Risk.DANGEROUS):
        m = summary.per_class[risk]
        lines.append(
            f"  {risk.value:<10}"
            + " "
            + cell(m.precision, "precision" in m.undefined)
            + "  "
            + cell(m.recall, "recall" in m.undefined)
            + "  "
            + cell(m.f1, "f1" in m.undefined)
        )
    return "\n".join(lines) + "\n"
