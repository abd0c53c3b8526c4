"""Pinhole projection, rigid transforms and planar pose estimation.

Conventions: camera frames are right-handed with +z along the optical
axis, +u right and +v down in the image.  A ``Pose`` maps points from a
source frame into a destination frame as ``R @ p + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import DegenerateConfiguration, NoConvergence, NonPositiveDepth
from .validation import as_float_array, check_finite_scalar

ROTATION_TOL = 1e-9
PNP_MAX_ITERATIONS = 100
PNP_REL_TOL = 1e-12
# Relative singular-value cutoff below which the DLT system is treated
# as rank-deficient (collinear or coincident correspondences).
_RANK_TOL = 1e-9


class Pixel(NamedTuple):
    """Continuous image coordinates; integer rounding is always explicit."""

    u: float
    v: float


class Point3(NamedTuple):
    """3-D point in meters in some named camera frame."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters (the K matrix) of one camera."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1 pixel")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        for name in ("fx", "fy", "cx", "cy"):
            check_finite_scalar(getattr(self, name), name)

    def as_matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def contains(self, u, v) -> bool:
        """True when the integer pixel (u, v) is inside the image."""
        return 0 <= u < self.width and 0 <= v < self.height

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        return cls(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform: rotation (3x3, proper orthonormal) plus translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = as_float_array(self.rotation, "rotation", shape=(3, 3))
        trans = as_float_array(self.translation, "translation", shape=(3,))
        if not np.allclose(rot.T @ rot, np.eye(3), rtol=0.0, atol=ROTATION_TOL):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(rot) - 1.0) > ROTATION_TOL:
            raise ValueError("rotation determinant differs from 1 by more than 1e-9")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def inverse(self) -> "Pose":
        rot_t = self.rotation.T.copy()
        return Pose(rot_t, -rot_t @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Pose that applies ``other`` first, then ``self``."""
        return Pose(
            _nearest_rotation(self.rotation @ other.rotation),
            self.rotation @ other.translation + self.translation,
        )

    def to_dict(self) -> dict:
        return {
            "rotation": [float(v) for v in self.rotation.ravel()],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Pose":
        rot = np.asarray(data["rotation"], dtype=np.float64).reshape(3, 3)
        return cls(rot, np.asarray(data["translation"], dtype=np.float64))


# -- scalar operations -------------------------------------------------------

def project_point(k: CameraIntrinsics, p: Point3) -> Pixel:
    """Project a camera-frame point to pixel coordinates.

    Raises ``NonPositiveDepth`` when the point is on or behind the
    camera plane.
    """
    x, y, z = (check_finite_scalar(v, n) for v, n in zip(p, "xyz"))
    if z <= 0:
        raise NonPositiveDepth(f"cannot project point with z={z}")
    return Pixel(k.fx * (x / z) + k.cx, k.fy * (y / z) + k.cy)


def back_project(k: CameraIntrinsics, px: Pixel, depth: float) -> Point3:
    """Lift a pixel to the 3-D point at the given depth along its ray."""
    depth = check_finite_scalar(depth, "depth")
    if depth <= 0:
        raise NonPositiveDepth(f"cannot back-project with depth={depth}")
    u, v = (check_finite_scalar(c, n) for c, n in zip(px, "uv"))
    return Point3(depth * (u - k.cx) / k.fx, depth * (v - k.cy) / k.fy, depth)


def transform_point(pose: Pose, p: Point3) -> Point3:
    """Apply the rigid transform: rotation @ p + translation."""
    vec = pose.rotation @ np.asarray(p, dtype=np.float64) + pose.translation
    return Point3(*vec)


# -- array operations (used by the dense and batch paths) --------------------

def project_points(k: CameraIntrinsics, points: np.ndarray) -> np.ndarray:
    """Project an (n, 3) array of camera-frame points to (n, 2) pixels."""
    pts = as_float_array(points, "points", shape=(None, 3))
    z = pts[:, 2]
    if np.any(z <= 0):
        raise NonPositiveDepth("cannot project points with z <= 0")
    out = np.empty((pts.shape[0], 2))
    out[:, 0] = k.fx * pts[:, 0] / z + k.cx
    out[:, 1] = k.fy * pts[:, 1] / z + k.cy
    return out


def transform_points(pose: Pose, points: np.ndarray) -> np.ndarray:
    pts = as_float_array(points, "points", shape=(None, 3))
    return pts @ pose.rotation.T + pose.translation


# -- planar Perspective-n-Point ----------------------------------------------

def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def _rotation_from_axis_angle(w: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(w)
    if theta < 1e-14:
        return np.eye(3) + _skew(w)
    axis = w / theta
    k = _skew(axis)
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def _nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Project a near-rotation onto SO(3) (keeps Pose invariants testable)."""
    u, _, vt = np.linalg.svd(m)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        rot = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return rot


def _normalize_2d(points: np.ndarray):
    """Hartley normalization: center and scale points to RMS radius sqrt(2)."""
    mean = points.mean(axis=0)
    centered = points - mean
    rms = math.sqrt(np.mean(np.sum(centered**2, axis=1)))
    scale = math.sqrt(2.0) / rms if rms > 0 else 1.0
    t = np.array(
        [[scale, 0.0, -scale * mean[0]], [0.0, scale, -scale * mean[1]], [0.0, 0.0, 1.0]]
    )
    return centered * scale, t


def _homography_dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized DLT homography mapping src (n, 2) onto dst (n, 2).

    Raises ``DegenerateConfiguration`` when the 2n x 9 system is
    rank-deficient (fewer than 4 points in general position).
    """
    if src.shape[0] < 4:
        raise DegenerateConfiguration(
            f"homography needs at least 4 correspondences, got {src.shape[0]}"
        )
    src_n, t_src = _normalize_2d(src)
    dst_n, t_dst = _normalize_2d(dst)

    n = src.shape[0]
    a = np.zeros((2 * n, 9))
    x, y = src_n[:, 0], src_n[:, 1]
    xp, yp = dst_n[:, 0], dst_n[:, 1]
    a[0::2, 3] = -x
    a[0::2, 4] = -y
    a[0::2, 5] = -1.0
    a[0::2, 6] = yp * x
    a[0::2, 7] = yp * y
    a[0::2, 8] = yp
    a[1::2, 0] = x
    a[1::2, 1] = y
    a[1::2, 2] = 1.0
    a[1::2, 6] = -xp * x
    a[1::2, 7] = -xp * y
    a[1::2, 8] = -xp

    _, sigma, vt = np.linalg.svd(a)
    # The system has a 1-D nullspace for a well-posed problem; a second
    # vanishing singular value means the solution is not unique.
    if sigma[0] == 0 or sigma[7] / sigma[0] < _RANK_TOL:
        raise DegenerateConfiguration(
            "correspondences are collinear or coincident (rank-deficient system)"
        )
    h = np.linalg.inv(t_dst) @ vt[-1].reshape(3, 3) @ t_src
    return h


def _plane_basis(world: np.ndarray):
    """Orthonormal in-plane basis (origin, e1, e2) of coplanar world points."""
    origin = world.mean(axis=0)
    centered = world - origin
    _, sigma, vt = np.linalg.svd(centered, full_matrices=False)
    if sigma[0] == 0 or sigma[1] / sigma[0] < _RANK_TOL:
        raise DegenerateConfiguration("world points are collinear or coincident")
    return origin, vt[0], vt[1]


def reprojection_residuals(
    pose: Pose, world: np.ndarray, observed: np.ndarray, k: CameraIntrinsics
) -> np.ndarray:
    """Per-point (n, 2) pixel residuals of projecting world through pose."""
    cam = transform_points(pose, world)
    return project_points(k, cam) - observed


def reprojection_rms(
    pose: Pose, world, observed, k: CameraIntrinsics
) -> float:
    world = as_float_array(world, "world", shape=(None, 3))
    observed = as_float_array(observed, "observed", shape=(None, 2))
    res = reprojection_residuals(pose, world, observed, k)
    return math.sqrt(float(np.mean(np.sum(res**2, axis=1))))


def estimate_pose_homography(
    world_points, observed, k: CameraIntrinsics
) -> Pose:
    """Initial pose from a plane-to-image homography decomposition.

    The world points must be coplanar; the homography between their
    in-plane coordinates and normalized image coordinates factors into
    the rotation columns and translation once intrinsics are removed.
    """
    world = as_float_array(world_points, "world_points", shape=(None, 3))
    obs = as_float_array(observed, "observed", shape=(None, 2))
    if world.shape[0] != obs.shape[0]:
        raise ValueError("world_points and observed must have equal length")
    if world.shape[0] < 4:
        raise DegenerateConfiguration(
            f"planar pose needs at least 4 correspondences, got {world.shape[0]}"
        )

    origin, e1, e2 = _plane_basis(world)
    centered = world - origin
    plane_uv = np.column_stack([centered @ e1, centered @ e2])

    # Normalized image coordinates remove K from the decomposition.
    norm_img = np.column_stack(
        [(obs[:, 0] - k.cx) / k.fx, (obs[:, 1] - k.cy) / k.fy]
    )
    h = _homography_dlt(plane_uv, norm_img)

    lam = 0.5 * (np.linalg.norm(h[:, 0]) + np.linalg.norm(h[:, 1]))
    if lam == 0 or not np.isfinite(lam):
        raise DegenerateConfiguration("homography decomposition failed")

    for sign in (1.0, -1.0):
        hs = sign / lam * h
        c1, c2 = hs[:, 0], hs[:, 1]
        rot = _nearest_rotation(
            np.column_stack([c1, c2, np.cross(c1, c2)])
        ) @ np.column_stack([e1, e2, np.cross(e1, e2)]).T
        trans = hs[:, 2] - rot @ origin
        cam_z = (world @ rot.T + trans)[:, 2]
        if np.all(cam_z > 0):
            return Pose(_nearest_rotation(rot), trans)
    raise DegenerateConfiguration("no decomposition places all points in front")


def refine_pose(
    initial: Pose,
    world_points,
    observed,
    k: CameraIntrinsics,
    *,
    max_iterations: int = PNP_MAX_ITERATIONS,
    rel_tol: float = PNP_REL_TOL,
) -> Pose:
    """Gauss-Newton refinement of a 6-DoF pose on reprojection error.

    Axis-angle increments are composed onto the current rotation and the
    result re-orthonormalized, so the Pose invariants hold at every
    step.  Steps are halved until they reduce the cost, which guarantees
    the refined residual never exceeds the initial one.
    """
    world = as_float_array(world_points, "world_points", shape=(None, 3))
    obs = as_float_array(observed, "observed", shape=(None, 2))
    rot = initial.rotation.copy()
    trans = initial.translation.copy()

    def cost_of(r, t):
        cam = world @ r.T + t
        z = cam[:, 2]
        if np.any(z <= 0):
            return math.inf, None
        proj = np.column_stack(
            [k.fx * cam[:, 0] / z + k.cx, k.fy * cam[:, 1] / z + k.cy]
        )
        res = (proj - obs).ravel()
        return float(res @ res), res

    cost, res = cost_of(rot, trans)
    if not math.isfinite(cost):
        raise NoConvergence("initial pose places points behind the camera")

    for _ in range(max_iterations):
        cam = world @ rot.T + trans
        x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
        n = world.shape[0]
        # d(pixel)/d(camera point)
        j_pt = np.zeros((n, 2, 3))
        j_pt[:, 0, 0] = k.fx / z
        j_pt[:, 0, 2] = -k.fx * x / z**2
        j_pt[:, 1, 1] = k.fy / z
        j_pt[:, 1, 2] = -k.fy * y / z**2
        # d(camera point)/d(axis-angle, translation) = [-[R p]x | I]
        # (the axis-angle increment multiplies R p only, not t).
        rp = cam - trans
        j = np.zeros((2 * n, 6))
        skews = np.zeros((n, 3, 3))
        skews[:, 0, 1] = rp[:, 2]
        skews[:, 0, 2] = -rp[:, 1]
        skews[:, 1, 0] = -rp[:, 2]
        skews[:, 1, 2] = rp[:, 0]
        skews[:, 2, 0] = rp[:, 1]
        skews[:, 2, 1] = -rp[:, 0]
        j[:, :3] = np.einsum("nij,njk->nik", j_pt, skews).reshape(2 * n, 3)
        j[:, 3:] = j_pt.reshape(2 * n, 3)

        try:
            delta = np.linalg.lstsq(j, -res, rcond=None)[0]
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("normal equations could not be solved") from exc
        if not np.all(np.isfinite(delta)):
            raise NoConvergence("refinement produced a non-finite step")

        improved = False
        step = delta
        for _ in range(24):
            rot_new = _nearest_rotation(_rotation_from_axis_angle(step[:3]) @ rot)
            trans_new = trans + step[3:]
            cost_new, res_new = cost_of(rot_new, trans_new)
            if cost_new < cost:
                improved = True
                break
            step = step / 2.0
        if not improved:
            break  # local minimum at working precision
        rot, trans, res = rot_new, trans_new, res_new
        prev_cost, cost = cost, cost_new
        if prev_cost - cost <= rel_tol * max(cost, 1e-300):
            break

    return Pose(rot, trans)


def estimate_pose_pnp(
    world_points,
    observed,
    k: CameraIntrinsics,
    *,
    max_iterations: int = PNP_MAX_ITERATIONS,
    rel_tol: float = PNP_REL_TOL,
) -> Pose:
    """Recover the pose mapping coplanar world points onto observed pixels.

    Direct linear transform on the plane-to-image homography provides
    the initial estimate, followed by Gauss-Newton refinement of the
    reprojection error.  Raises ``DegenerateConfiguration`` for fewer
    than 4 points or collinear/coincident configurations and
    ``NoConvergence`` if refinement breaks down numerically.
    """
    initial = estimate_pose_homography(world_points, observed, k)
    return refine_pose(
        initial,
        world_points,
        observed,
        k,
        max_iterations=max_iterations,
        rel_tol=rel_tol,
    )


class PlanarPoseEstimator(BaseEstimator):
    """Estimator-style wrapper around planar PnP.

    ``fit(world_points, pixels)`` recovers the camera pose for a set of
    coplanar 3-D points and their observed pixels; ``predict`` reprojects
    world points through the fitted pose.
    """

    def __init__(self, intrinsics: CameraIntrinsics | None = None,
                 max_iterations: int = PNP_MAX_ITERATIONS,
                 rel_tol: float = PNP_REL_TOL):
        self.intrinsics = intrinsics
        self.max_iterations = max_iterations
        self.rel_tol = rel_tol

    def fit(self, X, y):
        if self.intrinsics is None:
            raise ValueError("intrinsics must be provided before fitting")
        pose = estimate_pose_pnp(
            X, y, self.intrinsics,
            max_iterations=self.max_iterations, rel_tol=self.rel_tol,
        )
        self.pose_ = pose
        self.rotation_ = pose.rotation
        self.translation_ = pose.translation
        self.reprojection_rms_ = reprojection_rms(pose, X, y, self.intrinsics)
        return self

    def predict(self, X):
        if not hasattr(self, "pose_"):
            raise NotFittedError("PlanarPoseEstimator is not fitted yet")
        world = as_float_array(X, "X", shape=(None, 3))
        return project_points(self.intrinsics, transform_points(self.pose_, world))
