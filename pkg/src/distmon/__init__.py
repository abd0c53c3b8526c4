"""distmon: metric inter-personal distance monitoring from a single
static camera, using sparse calibrated control points to recover the
scale of relative monocular inverse-depth maps."""

from .calibration import (
    ControlPoint,
    RawSlamPoint,
    filter_by_confidence,
    remap_control_points,
)
from .distancing import (
    FrameReport,
    PairDistance,
    Risk,
    RiskThresholds,
    classify_risk,
    measure_frame,
)
from .geometry import (
    CameraIntrinsics,
    Pixel,
    PlanarPoseEstimator,
    Point3,
    Pose,
    back_project,
    estimate_pose_pnp,
    project_point,
    transform_point,
)
from .people import (
    PersonMeasurement,
    compute_centroid,
    filter_occluded_control_points,
    instance_ids,
    localize_person,
)
from .pipeline import process_frame
from .scaling import (
    Correspondence,
    DepthScaler,
    INVALID_DEPTH,
    ScaleParams,
    apply_scale,
    build_correspondences,
    fit_scale,
)

__all__ = [
    "CameraIntrinsics",
    "ControlPoint",
    "Correspondence",
    "DepthScaler",
    "FrameReport",
    "INVALID_DEPTH",
    "PairDistance",
    "PersonMeasurement",
    "Pixel",
    "PlanarPoseEstimator",
    "Point3",
    "Pose",
    "RawSlamPoint",
    "Risk",
    "RiskThresholds",
    "ScaleParams",
    "apply_scale",
    "back_project",
    "build_correspondences",
    "classify_risk",
    "compute_centroid",
    "estimate_pose_pnp",
    "filter_by_confidence",
    "filter_occluded_control_points",
    "fit_scale",
    "instance_ids",
    "localize_person",
    "measure_frame",
    "process_frame",
    "project_point",
    "remap_control_points",
    "transform_point",
]

__version__ = "0.1.0"
