"""The per-frame runtime path: occlusion filtering, per-frame scale fit,
dense scaling, person localization and pairwise distances.

The scale is refit on every frame because occlusion filtering changes
the usable control-point set from frame to frame.  All inputs are
immutable for the duration of a frame, so frames can be processed by
independent workers.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .calibration import ControlPoint
from .distancing import FrameReport, Risk, RiskThresholds, measure_frame
from .errors import NoValidDepth, ScalingImpossible
from .geometry import CameraIntrinsics
from .people import filter_occluded_control_points, instance_ids, localize_person
from .scaling import apply_scale, build_correspondences, fit_scale
from .validation import check_label_mask, check_map

DEFAULT_MIN_PIXELS = 50

_RISK_COLORS = {
    Risk.SAFE: (40, 200, 40),
    Risk.RISKY: (230, 200, 0),
    Risk.DANGEROUS: (220, 30, 30),
}


def process_frame(
    frame_id: str,
    rel: np.ndarray,
    mask: np.ndarray,
    control_points: Sequence[ControlPoint],
    k: CameraIntrinsics,
    *,
    thresholds: RiskThresholds = RiskThresholds(),
    min_pixels: int = DEFAULT_MIN_PIXELS,
    trim_fraction: float = 0.0,
) -> FrameReport:
    """Run the full non-network path on one frame's inputs.

    Raises ``ScalingImpossible`` when fewer than two control points
    survive occlusion filtering (two correspondences are the theoretical
    minimum for the affine fit).  Instances whose pixels all lack valid
    scaled depth are dropped from the report.
    """
    rel = check_map(rel, "rel")
    mask = check_label_mask(mask)
    if rel.shape != mask.shape:
        raise ValueError(
            f"relative map {rel.shape} and mask {mask.shape} dimensions differ"
        )
    if rel.shape != (k.height, k.width):
        raise ValueError(
            f"frame inputs are {rel.shape[1]}x{rel.shape[0]} but the camera is "
            f"{k.width}x{k.height}"
        )

    usable = filter_occluded_control_points(control_points, mask)
    if len(usable) < 2:
        raise ScalingImpossible(
            f"only {len(usable)} control points visible after occlusion "
            "filtering; at least 2 are required"
        )
    correspondences = build_correspondences(usable, rel)
    scale = fit_scale(correspondences, trim_fraction=trim_fraction)
    depth = apply_scale(rel, scale)

    persons = []
    for iid in instance_ids(mask, min_pixels):
        try:
            persons.append(localize_person(mask, iid, depth, k))
        except NoValidDepth:
            continue  # nothing measurable for this instance in this frame
    pairs = measure_frame(persons, thresholds)
    return FrameReport(
        frame_id=str(frame_id),
        persons=tuple(persons),
        pairs=tuple(pairs),
        scale=scale,
        control_points_used=len(usable),
    )


# -- overlay rendering --------------------------------------------------------

def _draw_line(img: np.ndarray, p0, p1, color) -> None:
    """Integer Bresenham line, clipped to the image."""
    h, w = img.shape[:2]
    x0, y0 = int(round(p0[0])), int(round(p0[1]))
    x1, y1 = int(round(p1[0])), int(round(p1[1]))
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        if 0 <= x0 < w and 0 <= y0 < h:
            img[y0, x0] = color
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def render_overlay(
    rel: np.ndarray, mask: np.ndarray, report: FrameReport
) -> np.ndarray:
    """Tinted-mask image with pair lines colored by risk class.

    The relative map (normalized to grayscale) is the backdrop, person
    pixels are tinted per instance, and each pair of centroids is joined
    by a line in its risk color (green / yellow / red).
    """
    rel = check_map(rel, "rel")
    mask = check_label_mask(mask)
    lo, hi = float(rel.min()), float(rel.max())
    span = hi - lo if hi > lo else 1.0
    gray = ((rel - lo) / span * 200.0 + 30.0).astype(np.uint8)
    img = np.repeat(gray[:, :, None], 3, axis=2)

    palette = np.array(
        [(90, 140, 220), (220, 140, 90), (140, 220, 90), (200, 90, 200),
         (90, 210, 210), (210, 210, 90)],
        dtype=np.uint8,
    )
    for person in report.persons:
        tint = palette[(person.instance_id - 1) % len(palette)]
        sel = mask == person.instance_id
        img[sel] = (img[sel] // 2 + tint // 2).astype(np.uint8)

    centroids = {
        p.instance_id: (p.centroid_pixel.u, p.centroid_pixel.v)
        for p in report.persons
    }
    for pair in report.pairs:
        _draw_line(
            img, centroids[pair.id_a], centroids[pair.id_b], _RISK_COLORS[pair.risk]
        )
    for u, v in centroids.values():
        v0, v1 = max(0, int(v) - 1), min(img.shape[0], int(v) + 2)
        u0, u1 = max(0, int(u) - 1), min(img.shape[1], int(u) + 2)
        img[v0:v1, u0:u1] = (255, 255, 255)
    return img
