"""Deterministic synthetic scenes with closed-form ground truth.

Scenes are rendered by ray-primitive intersection: a frontal far wall,
frontal panels (box faces) and, optionally, a floor plane make up the
background; people are upright thin boxes, so each silhouette is an
axis-aligned pixel rectangle at constant depth and every ground-truth
quantity stays closed-form.  A hidden affine corruption in the
inverse-depth domain simulates a monocular network's output.

The relative map is materialised in float32 (the on-disk precision) and
the metric map is defined as its exact affine pre-image, so the bundle
invariant ``relative = a * (1 / metric) + b`` holds at every valid pixel
whether the bundle is consumed in memory or through files.

Randomness comes from a fully specified xorshift64* generator so
bundles are bit-reproducible across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io_formats
from .calibration import ControlPoint
from .distancing import PairDistance, Risk, RiskThresholds
from .errors import InfeasibleSpec, NonPositiveRelative
from .geometry import CameraIntrinsics, Pixel, Point3, Pose
from .scaling import INVALID_DEPTH, ScaleParams
from .validation import check_map

_MASK64 = (1 << 64) - 1


class Rng:
    """xorshift64* generator: shifts 12/25/27, output multiplier
    2685821657736338717, seeded through one splitmix64 round so that
    any 64-bit seed (including 0) is usable.  Pure integer arithmetic,
    reproducible across languages."""

    def __init__(self, seed: int):
        z = (int(seed) + 0x9E3779B97F4A7C15) & _MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        z ^= z >> 31
        self._state = z if z != 0 else 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * 2685821657736338717) & _MASK64

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * ((self.next_u64() >> 11) * 2.0**-53)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_u64() % (hi - lo + 1)

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        u1 = ((self.next_u64() >> 11) + 0.5) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        return mean + std * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


_DEFAULT_INTRINSICS = CameraIntrinsics(
    fx=140.0, fy=140.0, cx=80.0, cy=60.0, width=160, height=120
)


@dataclass(frozen=True)
class SceneSpec:
    """Everything that determines a synthetic scene; the seed fixes all
    randomness."""

    seed: int
    intrinsics: CameraIntrinsics = _DEFAULT_INTRINSICS
    n_people: int = 3
    people_depth_range: tuple[float, float] = (2.5, 7.0)
    person_height_range: tuple[float, float] = (1.55, 1.95)
    person_width_range: tuple[float, float] = (0.40, 0.65)
    wall_depth_range: tuple[float, float] = (10.0, 18.0)
    n_panels_range: tuple[int, int] = (1, 3)
    panel_clearance: float = 1.0
    control_count: int = 60
    scale_a_range: tuple[float, float] = (0.5, 2.0)
    scale_b_range: tuple[float, float] = (0.0, 0.5)
    ground_visible: bool = False
    floor_height: float = 1.5
    thresholds: RiskThresholds = RiskThresholds()
    max_place_attempts: int = 200

    def __post_init__(self):
        if self.n_people < 0:
            raise ValueError("n_people must be non-negative")
        if self.scale_a_range[0] <= 0:
            raise ValueError("the hidden slope a must be positive")
        if self.scale_b_range[0] < 0:
            raise ValueError("the hidden offset b must be non-negative")
        if self.people_depth_range[0] <= 0:
            raise ValueError("people depth must be positive")
        if self.control_count < 2:
            raise ValueError("need at least 2 control points for scaling")


@dataclass(frozen=True)
class PersonTruth:
    instance_id: int
    centroid: Pixel
    position: Point3
    depth: float


@dataclass(frozen=True)
class GroundPlaneTruth:
    """Floor-plane ground truth for the homography baseline: known
    image-to-ground correspondences plus exact foot-point positions."""

    correspondences: tuple[tuple[float, float, float, float], ...]
    positions: tuple[tuple[int, tuple[float, float]], ...]
    pairs: tuple[PairDistance, ...]


@dataclass
class SceneBundle:
    spec: SceneSpec
    metric: np.ndarray
    relative: np.ndarray
    mask: np.ndarray
    control_points: tuple[ControlPoint, ...]
    persons: tuple[PersonTruth, ...]
    pairs: tuple[PairDistance, ...]
    scale: ScaleParams
    a: float
    b: float
    ground: GroundPlaneTruth | None


def corrupt_to_relative(metric: np.ndarray, a: float, b: float) -> np.ndarray:
    """Apply the hidden affine corruption x = a * (1/d) + b per pixel.

    Invalid (non-positive) metric pixels stay 0 in the output.  The
    exact inverse of the scaling fit: on correspondences from this map
    the fitted line has slope 1/a and offset -b/a.
    """
    metric = check_map(metric, "metric")
    if a <= 0:
        raise NonPositiveRelative(f"slope a must be positive, got {a}")
    valid = metric > INVALID_DEPTH
    out = np.zeros_like(metric)
    out[valid] = a / metric[valid] + b
    if np.any(out[valid] <= 0):
        raise NonPositiveRelative(
            "corruption parameters yield non-positive relative values"
        )
    return out


def _classify(distance: float, t: RiskThresholds) -> Risk:
    # Generator-side risk labelling, independent of the pipeline's code.
    if distance < t.dangerous_below:
        return Risk.DANGEROUS
    if distance <= t.safe_above:
        return Risk.RISKY
    return Risk.SAFE


def _round_half_down(x: float) -> int:
    return int(math.ceil(x - 0.5))


def _rects_overlap(a, b, gap: int = 1) -> bool:
    au0, av0, au1, av1 = a
    bu0, bv0, bu1, bv1 = b
    return not (
        au1 + gap < bu0 or bu1 + gap < au0 or av1 + gap < bv0 or bv1 + gap < av0
    )


def _place_people(spec: SceneSpec, rng: Rng):
    """Sample disjoint person rectangles (u0, v0, u1, v1, depth)."""
    k = spec.intrinsics
    z_min, z_max = spec.people_depth_range
    rects = []
    for _ in range(spec.n_people):
        placed = False
        for _ in range(spec.max_place_attempts):
            if spec.ground_visible:
                # Feet on the floor: the bottom edge row fixes the depth.
                v_lo = int(math.ceil(k.cy + spec.floor_height * k.fy / z_max))
                v_hi = min(
                    k.height - 2,
                    int(math.floor(k.cy + spec.floor_height * k.fy / z_min)),
                )
                if v_hi < v_lo:
                    raise InfeasibleSpec(
                        "floor band outside the image; adjust depth range or "
                        "floor height"
                    )
                v1 = rng.randint(v_lo, v_hi)
                depth = spec.floor_height * k.fy / (v1 - k.cy)
            else:
                depth = rng.uniform(z_min, z_max)
            h_px = max(3, round(rng.uniform(*spec.person_height_range) * k.fy / depth))
            w_px = max(3, round(rng.uniform(*spec.person_width_range) * k.fx / depth))
            if spec.ground_visible:
                v0 = v1 - h_px + 1
                if v0 < 1:
                    continue
            else:
                if h_px > k.height - 2:
                    continue
                v0 = rng.randint(1, k.height - 1 - h_px)
                v1 = v0 + h_px - 1
            if w_px > k.width - 2:
                continue
            u0 = rng.randint(1, k.width - 1 - w_px)
            u1 = u0 + w_px - 1
            rect = (u0, v0, u1, v1)
            if any(_rects_overlap(rect, r[:4]) for r in rects):
                continue
            rects.append((u0, v0, u1, v1, depth))
            placed = True
            break
        if not placed:
            raise InfeasibleSpec(
                f"could not place person {len(rects) + 1} of {spec.n_people} "
                f"without overlap after {spec.max_place_attempts} attempts"
            )
    return rects


def _render_background(spec: SceneSpec, rng: Rng) -> np.ndarray:
    """Ray-primitive depth of wall + panels (+ floor), nearest-surface."""
    k = spec.intrinsics
    depth = np.full((k.height, k.width), rng.uniform(*spec.wall_depth_range))

    panel_near = spec.people_depth_range[1] + spec.panel_clearance
    panel_far = spec.wall_depth_range[0] - 0.5
    for _ in range(rng.randint(*spec.n_panels_range)):
        pw = rng.randint(k.width // 8, k.width // 3)
        ph = rng.randint(k.height // 8, k.height // 3)
        u0 = rng.randint(0, k.width - pw)
        v0 = rng.randint(0, k.height - ph)
        d = rng.uniform(panel_near, panel_far)
        region = depth[v0 : v0 + ph, u0 : u0 + pw]
        np.minimum(region, d, out=region)

    if spec.ground_visible:
        v = np.arange(k.height, dtype=np.float64)
        below = v > k.cy
        floor_z = np.full(k.height, np.inf)
        floor_z[below] = spec.floor_height * k.fy / (v[below] - k.cy)
        depth = np.minimum(depth, floor_z[:, None])
    return depth


def _sample_control_points(
    spec: SceneSpec, rng: Rng, mask: np.ndarray, relative: np.ndarray
) -> list[tuple[int, int]]:
    k = spec.intrinsics
    chosen: list[tuple[int, int]] = []
    seen = set()
    attempts = 0
    while len(chosen) < spec.control_count:
        attempts += 1
        if attempts > 200 * spec.control_count:
            raise InfeasibleSpec("not enough background pixels for control points")
        u = rng.randint(0, k.width - 1)
        v = rng.randint(0, k.height - 1)
        if mask[v, u] != 0 or (u, v) in seen:
            continue
        seen.add((u, v))
        chosen.append((u, v))
    # The regression needs at least two distinct relative values; swap in
    # the first raster-order pixel with a different value if necessary.
    values = {relative[v, u] for u, v in chosen}
    if len(values) < 2:
        want_not = relative[chosen[0][1], chosen[0][0]]
        background = (mask == 0) & (relative != want_not)
        vs, us = np.nonzero(background)
        if us.size == 0:
            raise InfeasibleSpec("background has a single depth everywhere")
        chosen[-1] = (int(us[0]), int(vs[0]))
    return chosen


def generate_scene(spec: SceneSpec) -> SceneBundle:
    """Render a full scene bundle, deterministic in the spec's seed."""
    rng = Rng(spec.seed)
    k = spec.intrinsics

    a = rng.uniform(*spec.scale_a_range)
    b = rng.uniform(*spec.scale_b_range)

    depth = _render_background(spec, rng)
    rects = _place_people(spec, rng)
    mask = np.zeros((k.height, k.width), dtype=np.uint8)
    for index, (u0, v0, u1, v1, d) in enumerate(rects, start=1):
        region = depth[v0 : v1 + 1, u0 : u1 + 1]
        if np.any(region < d - 1e-9):
            raise InfeasibleSpec("person would be occluded by the background")
        region[:] = d
        mask[v0 : v1 + 1, u0 : u1 + 1] = index

    # Materialize the corruption at the on-disk float32 precision and
    # define the metric map as its exact affine pre-image, so the
    # affine relation holds exactly for file-based consumers too.
    relative = (a / depth + b).astype(np.float32)
    metric = a / (relative.astype(np.float64) - b)

    control = [
        ControlPoint(u=u, v=v, depth=float(metric[v, u]))
        for u, v in _sample_control_points(spec, rng, mask, relative)
    ]

    persons = []
    for index, (u0, v0, u1, v1, _) in enumerate(rects, start=1):
        cu = 0.5 * (u0 + u1)
        cv = 0.5 * (v0 + v1)
        ru, rv = _round_half_down(cu), _round_half_down(cv)
        d = float(metric[rv, ru])
        persons.append(
            PersonTruth(
                instance_id=index,
                centroid=Pixel(float(ru), float(rv)),
                position=Point3(
                    d * (ru - k.cx) / k.fx, d * (rv - k.cy) / k.fy, d
                ),
                depth=d,
            )
        )

    pairs = []
    for i in range(len(persons)):
        for j in range(i + 1, len(persons)):
            dist = math.dist(persons[i].position, persons[j].position)
            pairs.append(
                PairDistance(
                    id_a=persons[i].instance_id,
                    id_b=persons[j].instance_id,
                    distance=dist,
                    risk=_classify(dist, spec.thresholds),
                )
            )

    ground = _ground_truth(spec, rects, persons) if spec.ground_visible else None

    return SceneBundle(
        spec=spec,
        metric=metric,
        relative=relative,
        mask=mask,
        control_points=tuple(control),
        persons=tuple(persons),
        pairs=tuple(pairs),
        scale=ScaleParams(alpha=-b / a, beta=1.0 / a),
        a=a,
        b=b,
        ground=ground,
    )


def _ground_truth(spec: SceneSpec, rects, persons) -> GroundPlaneTruth:
    """Exact floor correspondences and foot-point baseline positions.

    The ground frame is (lateral offset, forward range) in meters; a
    floor pixel (u, v) below the horizon maps to Z = h * fy / (v - cy)
    and X = Z * (u - cx) / fx.
    """
    k = spec.intrinsics
    z_far = spec.wall_depth_range[0] - 0.5
    v_top = int(math.ceil(k.cy + spec.floor_height * k.fy / z_far)) + 1
    v_bottom = k.height - 2
    corr = []
    for v in (v_top, (v_top + v_bottom) // 2, v_bottom):
        z = spec.floor_height * k.fy / (v - k.cy)
        for u in (2, k.width // 2, k.width - 3):
            corr.append((float(u), float(v), z * (u - k.cx) / k.fx, z))

    positions = []
    for index, (u0, _, u1, v1, _) in enumerate(rects, start=1):
        foot_u = 0.5 * (u0 + u1)
        z = spec.floor_height * k.fy / (v1 - k.cy)
        positions.append((index, (z * (foot_u - k.cx) / k.fx, z)))

    pairs = []
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            dist = math.dist(positions[i][1], positions[j][1])
            pairs.append(
                PairDistance(
                    id_a=positions[i][0],
                    id_b=positions[j][0],
                    distance=dist,
                    risk=_classify(dist, spec.thresholds),
                )
            )
    return GroundPlaneTruth(
        correspondences=tuple(corr),
        positions=tuple(positions),
        pairs=tuple(pairs),
    )


def truth_to_dict(bundle: SceneBundle) -> dict:
    """Hidden parameters plus ground-truth measurements for truth.json."""
    data = {
        "seed": bundle.spec.seed,
        "a": bundle.a,
        "b": bundle.b,
        "scale": {"alpha": bundle.scale.alpha, "beta": bundle.scale.beta},
        "thresholds": {
            "dangerous_below": bundle.spec.thresholds.dangerous_below,
            "safe_above": bundle.spec.thresholds.safe_above,
        },
        "persons": [
            {
                "id": p.instance_id,
                "centroid": [p.centroid.u, p.centroid.v],
                "position": [p.position.x, p.position.y, p.position.z],
                "depth": p.depth,
            }
            for p in bundle.persons
        ],
        "pairs": [
            {
                "a": pair.id_a,
                "b": pair.id_b,
                "distance_m": pair.distance,
                "risk": pair.risk.value,
            }
            for pair in bundle.pairs
        ],
        "ground": None,
    }
    if bundle.ground is not None:
        data["ground"] = {
            "positions": [
                {"id": iid, "ground": [x, z]} for iid, (x, z) in bundle.ground.positions
            ],
            "pairs": [
                {
                    "a": pair.id_a,
                    "b": pair.id_b,
                    "distance_m": pair.distance,
                    "risk": pair.risk.value,
                }
                for pair in bundle.ground.pairs
            ],
        }
    return data


def write_bundle(bundle: SceneBundle, out_dir) -> dict[str, Path]:
    """Write all bundle artifacts with the io_formats writers.

    Produces relative.pfm, mask.pgm, control_points.csv,
    intrinsics.json, reference.pfm (metric ground truth for evaluation),
    truth.json and, for ground scenes, ground.csv.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "relative": out / "relative.pfm",
        "mask": out / "mask.pgm",
        "control_points": out / "control_points.csv",
        "intrinsics": out / "intrinsics.json",
        "reference": out / "reference.pfm",
        "truth": out / "truth.json",
    }
    io_formats.write_pfm(bundle.relative, paths["relative"])
    io_formats.write_label_mask(bundle.mask, paths["mask"])
    io_formats.write_control_points(bundle.control_points, paths["control_points"])
    io_formats.write_intrinsics(bundle.spec.intrinsics, paths["intrinsics"])
    io_formats.write_pfm(bundle.metric, paths["reference"])
    io_formats.write_json(truth_to_dict(bundle), paths["truth"])
    if bundle.ground is not None:
        paths["ground"] = out / "ground.csv"
        io_formats.write_points_csv(
            bundle.ground.correspondences, paths["ground"], io_formats.GROUND_SCHEMA
        )
    return paths


# -- calibration-board fixtures ----------------------------------------------

@dataclass(frozen=True)
class BoardBundle:
    """A planar calibration board seen by the mobile and fixed cameras."""

    board_points: np.ndarray
    mobile_pixels: np.ndarray
    fixed_pixels: np.ndarray
    pose_board_to_mobile: Pose
    pose_board_to_fixed: Pose
    pose_mobile_to_fixed: Pose


def random_rotation(rng: Rng, max_angle: float = 0.5) -> np.ndarray:
    """Rotation about a random axis by a random angle up to max_angle."""
    axis = np.array([rng.normal(), rng.normal(), rng.normal()])
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


def random_board_pose(rng: Rng, depth_range=(1.5, 4.0)) -> Pose:
    """Pose placing the board plane in front of a camera."""
    rot = random_rotation(rng, max_angle=0.4)
    trans = np.array(
        [rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(*depth_range)]
    )
    return Pose(rot, trans)


def generate_board(
    seed: int,
    k_mobile: CameraIntrinsics,
    k_fixed: CameraIntrinsics,
    n_points: int = 9,
) -> BoardBundle:
    """Coplanar board points observed noise-free by both cameras."""
    rng = Rng(seed)
    side = max(2, math.isqrt(n_points))
    pts = []
    for i in range(n_points):
        gx = (i % side) * 0.12 + rng.uniform(-0.02, 0.02)
        gy = (i // side) * 0.12 + rng.uniform(-0.02, 0.02)
        pts.append((gx, gy, 0.0))
    board = np.array(pts)

    pose_mobile = random_board_pose(rng)
    pose_fixed = random_board_pose(rng)
    mobile_cam = board @ pose_mobile.rotation.T + pose_mobile.translation
    fixed_cam = board @ pose_fixed.rotation.T + pose_fixed.translation

    def pixels(cam, k):
        return np.column_stack(
            [
                k.fx * cam[:, 0] / cam[:, 2] + k.cx,
                k.fy * cam[:, 1] / cam[:, 2] + k.cy,
            ]
        )

    return BoardBundle(
        board_points=board,
        mobile_pixels=pixels(mobile_cam, k_mobile),
        fixed_pixels=pixels(fixed_cam, k_fixed),
        pose_board_to_mobile=pose_mobile,
        pose_board_to_fixed=pose_fixed,
        pose_mobile_to_fixed=pose_fixed.compose(pose_mobile.inverse()),
    )
