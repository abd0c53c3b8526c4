"""Offline initialization: turn confidence-scored SLAM depth points from
the mobile scan into control points in the fixed camera image.

The remapping back-projects each mobile-frame pixel with the mobile
intrinsics, moves the 3-D point through the mobile-to-fixed pose and
projects it with the fixed intrinsics.  Control points are immutable
after initialization and persist to disk; the runtime only reads them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyResult
from .geometry import CameraIntrinsics, Pixel, Pose
from .validation import check_finite_scalar, round_half_down


@dataclass(frozen=True)
class RawSlamPoint:
    """Mobile-camera pixel with metric depth and a confidence score."""

    pixel: Pixel
    depth: float
    confidence: float

    def __post_init__(self):
        check_finite_scalar(self.pixel.u, "u")
        check_finite_scalar(self.pixel.v, "v")
        if not self.depth > 0:
            raise ValueError(f"depth must be positive, got {self.depth}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class ControlPoint:
    """Integer pixel of the fixed camera with metric depth, the anchor
    used for per-frame depth rescaling."""

    u: int
    v: int
    depth: float

    def __post_init__(self):
        if self.u < 0 or self.v < 0:
            raise ValueError("control point pixel must be non-negative")
        if not self.depth > 0:
            raise ValueError(f"depth must be positive, got {self.depth}")


def filter_by_confidence(
    points: Sequence[RawSlamPoint], threshold: float
) -> list[RawSlamPoint]:
    """Keep points with confidence >= threshold, preserving order."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return [p for p in points if p.confidence >= threshold]


def remap_points(
    points: Sequence[RawSlamPoint],
    k_mobile: CameraIntrinsics,
    k_fixed: CameraIntrinsics,
    pose_mobile_to_fixed: Pose,
) -> list[tuple[Pixel, float]]:
    """Continuous-pixel remap of mobile SLAM points into the fixed view.

    Returns (pixel, depth) pairs in the fixed camera frame for every
    point whose transformed depth is positive; no rounding, bounds check
    or collision handling is applied here.
    """
    if not points:
        return []
    arr = np.array([(p.pixel.u, p.pixel.v, p.depth) for p in points], dtype=np.float64)
    xyz = np.empty((len(points), 3))
    xyz[:, 0] = arr[:, 2] * (arr[:, 0] - k_mobile.cx) / k_mobile.fx
    xyz[:, 1] = arr[:, 2] * (arr[:, 1] - k_mobile.cy) / k_mobile.fy
    xyz[:, 2] = arr[:, 2]
    cam = xyz @ pose_mobile_to_fixed.rotation.T + pose_mobile_to_fixed.translation

    out: list[tuple[Pixel, float]] = []
    for x, y, z in cam:
        if z <= 0:
            continue
        out.append(
            (Pixel(k_fixed.fx * x / z + k_fixed.cx, k_fixed.fy * y / z + k_fixed.cy), z)
        )
    return out


def remap_control_points(
    points: Sequence[RawSlamPoint],
    k_mobile: CameraIntrinsics,
    k_fixed: CameraIntrinsics,
    pose_mobile_to_fixed: Pose,
) -> list[ControlPoint]:
    """Remap confidence-filtered SLAM points to fixed-frame control points.

    Continuous remapped pixels are rounded to the nearest integer (ties
    toward negative infinity), points outside the fixed image or behind
    the camera are discarded, and when several points land on the same
    integer pixel only the nearest (smallest depth) survives.

    Raises ``EmptyResult`` when nothing survives, signalling that the
    calibration scan must be redone.
    """
    continuous = remap_points(points, k_mobile, k_fixed, pose_mobile_to_fixed)
    best: dict[tuple[int, int], tuple[float, int]] = {}
    for index, (px, depth) in enumerate(continuous):
        u = int(round_half_down(px.u))
        v = int(round_half_down(px.v))
        if not k_fixed.contains(u, v):
            continue
        key = (u, v)
        if key not in best or depth < best[key][0]:
            best[key] = (depth, index)
    if not best:
        raise EmptyResult("no SLAM point survived remapping to the fixed view")
    # Deterministic output order: order of the surviving representatives.
    survivors = sorted(best.items(), key=lambda item: item[1][1])
    return [ControlPoint(u=u, v=v, depth=depth) for (u, v), (depth, _) in survivors]
