"""Instance-mask processing: occlusion filtering, centroids, 3-D localization.

A mask is a 2-D integer array where 0 is background and each value
k >= 1 is one person instance.  The centroid of an instance is the mean
of its pixel coordinates; when that lands outside the instance (masks
can be ring-shaped, e.g. a person behind a bench) or on an invalid
depth pixel, the nearest instance pixel with valid depth stands in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .calibration import ControlPoint
from .errors import EmptyInstance, NoValidDepth
from .geometry import CameraIntrinsics, Pixel, Point3, back_project
from .scaling import INVALID_DEPTH
from .validation import check_label_mask, check_map, round_half_down


@dataclass(frozen=True)
class PersonMeasurement:
    """One localized person: instance id, centroid pixel, 3-D position."""

    instance_id: int
    centroid_pixel: Pixel
    position: Point3


def instance_ids(mask: np.ndarray, min_pixels: int = 1) -> list[int]:
    """Instance labels present in the mask with at least min_pixels pixels,
    ascending.  Segmentation speckle below the cutoff is ignored."""
    mask = check_label_mask(mask)
    labels, counts = np.unique(mask, return_counts=True)
    return [int(l) for l, c in zip(labels, counts) if l >= 1 and c >= min_pixels]


def filter_occluded_control_points(
    points: Sequence[ControlPoint], mask: np.ndarray
) -> list[ControlPoint]:
    """Drop control points covered by a person (mask label != 0).

    The background behind a person is not visible, so its depth anchor
    cannot be trusted for this frame.
    """
    mask = check_label_mask(mask)
    height, width = mask.shape
    out = []
    for cp in points:
        if not (0 <= cp.u < width and 0 <= cp.v < height):
            raise ValueError(
                f"control point ({cp.u}, {cp.v}) outside {width}x{height} mask"
            )
        if mask[cp.v, cp.u] == 0:
            out.append(cp)
    return out


def compute_centroid(
    mask: np.ndarray, instance_id: int, depth: np.ndarray
) -> Pixel:
    """Centroid pixel of one instance, with nearest-valid fallback.

    The mean pixel coordinate is rounded to the nearest integer (ties
    toward negative infinity).  If the rounded pixel is not part of the
    instance or its depth is invalid, the instance pixel with valid
    depth closest to the (unrounded) centroid is returned instead,
    breaking ties by smallest v then smallest u.
    """
    mask = check_label_mask(mask)
    depth = check_map(depth, "depth")
    if mask.shape != depth.shape:
        raise ValueError("mask and depth must share dimensions")
    vs, us = np.nonzero(mask == instance_id)
    if us.size == 0:
        raise EmptyInstance(f"instance {instance_id} has no pixels")
    cu = float(us.mean())
    cv = float(vs.mean())
    ru = int(round_half_down(cu))
    rv = int(round_half_down(cv))
    if mask[rv, ru] == instance_id and depth[rv, ru] > INVALID_DEPTH:
        return Pixel(float(ru), float(rv))

    valid = depth[vs, us] > INVALID_DEPTH
    if not valid.any():
        raise NoValidDepth(f"instance {instance_id} has no valid depth pixel")
    us_v = us[valid]
    vs_v = vs[valid]
    dist_sq = (us_v - cu) ** 2 + (vs_v - cv) ** 2
    best = np.lexsort((us_v, vs_v, dist_sq))[0]
    return Pixel(float(us_v[best]), float(vs_v[best]))


def localize_person(
    mask: np.ndarray, instance_id: int, depth: np.ndarray, k: CameraIntrinsics
) -> PersonMeasurement:
    """Back-project the instance centroid to its 3-D position.

    The depth is read from the scaled map at the single centroid pixel,
    so the returned z equals that map value exactly.  A small median
    window around the centroid would be the natural extension if
    single-pixel depth noise ever becomes a problem in deployments.
    """
    centroid = compute_centroid(mask, instance_id, depth)
    d = float(depth[int(centroid.v), int(centroid.u)])
    return PersonMeasurement(
        instance_id=int(instance_id),
        centroid_pixel=centroid,
        position=back_project(k, centroid, d),
    )
