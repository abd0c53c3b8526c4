"""Ground-plane homography baseline: localize people at the center of
the bounding-box side touching the floor.

This is the classic single-camera competitor for side-by-side
evaluation.  It needs a visible ground plane with known image-to-ground
correspondences, which is exactly the constraint the depth-scaling
pipeline removes; where no ground plane is visible the baseline is
simply inapplicable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .distancing import PairDistance, RiskThresholds, classify_risk
from .errors import DegenerateConfiguration, HomogeneousDivideByZero
from .geometry import _homography_dlt
from .people import instance_ids
from .validation import as_float_array, check_label_mask

_DET_TOL = 1e-12
_W_TOL = 1e-12


@dataclass(frozen=True)
class BoundingBox:
    u_min: int
    v_min: int
    u_max: int
    v_max: int

    def __post_init__(self):
        if self.u_min > self.u_max or self.v_min > self.v_max:
            raise ValueError("bounding box extents are inverted")

    @property
    def foot_point(self) -> tuple[float, float]:
        """Center of the bottom edge, where the person touches the floor."""
        return (0.5 * (self.u_min + self.u_max), float(self.v_max))


def fit_ground_homography(image_points, ground_points) -> np.ndarray:
    """3x3 map from image pixels to metric ground-plane coordinates.

    Estimated with the normalized direct linear transform (points
    centered and scaled to RMS sqrt(2) before solving).  Requires at
    least 4 correspondences with no 3 collinear on either side.
    """
    img = as_float_array(image_points, "image_points", shape=(None, 2))
    gnd = as_float_array(ground_points, "ground_points", shape=(None, 2))
    if img.shape[0] != gnd.shape[0]:
        raise ValueError("image_points and ground_points must have equal length")
    h = _homography_dlt(img, gnd)
    h = h / np.linalg.norm(h)
    if abs(np.linalg.det(h)) <= _DET_TOL:
        raise DegenerateConfiguration("fitted homography is not invertible")
    return h


def map_to_ground(h: np.ndarray, pixel) -> tuple[float, float]:
    """Apply the homography with homogeneous normalization."""
    u, v = float(pixel[0]), float(pixel[1])
    vec = h @ np.array([u, v, 1.0])
    if abs(vec[2]) < _W_TOL:
        raise HomogeneousDivideByZero(
            f"pixel ({u}, {v}) maps to the plane at infinity"
        )
    return (float(vec[0] / vec[2]), float(vec[1] / vec[2]))


def bounding_box(mask: np.ndarray, instance_id: int) -> BoundingBox:
    mask = check_label_mask(mask)
    vs, us = np.nonzero(mask == instance_id)
    if us.size == 0:
        raise ValueError(f"instance {instance_id} has no pixels")
    return BoundingBox(
        u_min=int(us.min()), v_min=int(vs.min()),
        u_max=int(us.max()), v_max=int(vs.max()),
    )


def baseline_positions(
    mask: np.ndarray, h: np.ndarray, min_pixels: int = 1
) -> list[tuple[int, tuple[float, float]]]:
    """Ground position of every instance's foot point, by instance id."""
    out = []
    for iid in instance_ids(mask, min_pixels):
        box = bounding_box(mask, iid)
        out.append((iid, map_to_ground(h, box.foot_point)))
    return out


def baseline_pairs(
    positions: Sequence[tuple[int, tuple[float, float]]],
    t: RiskThresholds = RiskThresholds(),
) -> list[PairDistance]:
    """Pairwise 2-D ground-plane distances with risk classes."""
    ordered = sorted(positions, key=lambda item: item[0])
    out = []
    for (id_a, pos_a), (id_b, pos_b) in combinations(ordered, 2):
        d = math.dist(pos_a, pos_b)
        out.append(
            PairDistance(id_a=id_a, id_b=id_b, distance=d, risk=classify_risk(d, t))
        )
    return out


class GroundPlaneMapper(BaseEstimator, TransformerMixin):
    """Estimator-style interface to the image-to-ground homography.

    ``fit(X, y)`` takes image pixels ``X`` (n, 2) and metric ground
    coordinates ``y`` (n, 2); ``transform`` maps pixels to the ground
    plane through the fitted homography.
    """

    def fit(self, X, y):
        self.matrix_ = fit_ground_homography(X, y)
        return self

    def transform(self, X):
        if not hasattr(self, "matrix_"):
            raise NotFittedError("GroundPlaneMapper is not fitted yet")
        pixels = as_float_array(X, "X", shape=(None, 2))
        return np.array([map_to_ground(self.matrix_, p) for p in pixels])
