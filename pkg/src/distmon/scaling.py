"""Affine recovery of metric scale for relative inverse-depth maps.

Monocular networks emit relative inverse depth: proportional to 1/depth
only up to an unknown offset and slope.  Sparse control points with
known metric depth pin those two parameters down.  The fit solves the
2x2 normal equations

    [ n       sum(x)   ] [alpha]   [ sum(y)   ]
    [ sum(x)  sum(x^2) ] [beta ] = [ sum(x y) ]

for the line y = alpha + beta * x mapping relative inverse depth x to
metric inverse depth y, and the dense map is then scaled per pixel and
inverted back to the depth domain.

Per-pixel depth maps are plain 2-D float arrays; the value 0.0 is the
INVALID marker for metric maps (valid depths are strictly positive).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .calibration import ControlPoint
from .errors import InsufficientPoints, SingularSystem
from .validation import check_finite_scalar, check_map

#: Scaled inverse depths at or below this are INVALID rather than
#: becoming million-meter depths.
EPS_INVERSE_DEPTH = 1e-6

#: In-memory and on-disk marker for pixels without a valid metric depth.
INVALID_DEPTH = 0.0


class Correspondence(NamedTuple):
    """One control point in the regression domain: relative inverse
    depth x against metric inverse depth y (1/m)."""

    x: float
    y: float


@dataclass(frozen=True)
class ScaleParams:
    """Offset and slope of the fitted inverse-depth line."""

    alpha: float
    beta: float

    def __post_init__(self):
        check_finite_scalar(self.alpha, "alpha")
        check_finite_scalar(self.beta, "beta")
        if self.beta == 0:
            raise ValueError("beta must be non-zero")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta}


def build_correspondences(
    control_points: Sequence[ControlPoint], rel: np.ndarray
) -> list[Correspondence]:
    """Pair each control point's relative inverse depth with its metric
    inverse depth.  Control points must be in-bounds for ``rel``."""
    rel = check_map(rel, "rel")
    height, width = rel.shape
    out = []
    for cp in control_points:
        if not (0 <= cp.u < width and 0 <= cp.v < height):
            raise ValueError(
                f"control point ({cp.u}, {cp.v}) outside {width}x{height} map"
            )
        out.append(Correspondence(x=float(rel[cp.v, cp.u]), y=1.0 / cp.depth))
    return out


def _solve_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Closed-form normal-equation solution, centered for conditioning.

    Centering (subtracting the means before solving, de-centering after)
    gives the identical solution with a far better conditioned system
    for large point counts.
    """
    x_mean = float(x.mean())
    y_mean = float(y.mean())
    dx = x - x_mean
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise SingularSystem(
            "all relative inverse depths are identical; the normal-equation "
            "matrix is singular"
        )
    beta = float(dx @ (y - y_mean)) / sxx
    alpha = y_mean - beta * x_mean
    return alpha, beta


def fit_scale(
    pairs: Sequence[Correspondence], trim_fraction: float = 0.0
) -> ScaleParams:
    """Least-squares fit of (alpha, beta) from correspondences.

    With ``trim_fraction`` > 0 the fit is repeated once after discarding
    that fraction of points with the largest absolute residuals
    (opt-in robustness for noisy control points; default stays faithful
    to the plain least-squares formulation).
    """
    if not 0.0 <= trim_fraction < 1.0:
        raise ValueError(f"trim_fraction must be in [0, 1), got {trim_fraction}")
    n = len(pairs)
    if n < 2:
        raise InsufficientPoints(f"need at least 2 correspondences, got {n}")
    x = np.array([p.x for p in pairs], dtype=np.float64)
    y = np.array([p.y for p in pairs], dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("correspondence x values must be finite")
    if not (np.isfinite(y).all() and (y > 0).all()):
        raise ValueError("metric inverse depths must be finite and positive")

    alpha, beta = _solve_line(x, y)
    if trim_fraction > 0.0:
        drop = int(trim_fraction * n)
        if drop > 0:
            if n - drop < 2:
                raise InsufficientPoints(
                    f"trimming {drop} of {n} points leaves fewer than 2"
                )
            residuals = np.abs(y - (alpha + beta * x))
            keep = np.argsort(residuals, kind="stable")[: n - drop]
            keep.sort()
            alpha, beta = _solve_line(x[keep], y[keep])
    if beta == 0.0:
        raise SingularSystem("correspondences fit a horizontal line (beta = 0)")
    return ScaleParams(alpha=alpha, beta=beta)


def apply_scale(
    rel: np.ndarray, s: ScaleParams, eps: float = EPS_INVERSE_DEPTH
) -> np.ndarray:
    """Scale a relative inverse-depth map to metric depth.

    Per pixel: y = alpha + beta * x; the output is 1/y meters where
    y > eps and INVALID (0.0) elsewhere.
    """
    rel = check_map(rel, "rel")
    inv = s.alpha + s.beta * rel
    out = np.full(rel.shape, INVALID_DEPTH, dtype=np.float64)
    valid = inv > eps
    np.divide(1.0, inv, out=out, where=valid)
    return out


class DepthScaler(BaseEstimator, TransformerMixin):
    """Estimator-style interface to the inverse-depth scale recovery.

    ``fit(X, y)`` takes relative inverse depths ``X`` (1-D array or
    column vector) and metric inverse depths ``y`` and stores ``alpha_``
    and ``beta_``; ``transform`` maps a dense relative inverse-depth map
    to metric depth with 0.0 marking invalid pixels.
    """

    def __init__(self, trim_fraction: float = 0.0,
                 eps_inverse_depth: float = EPS_INVERSE_DEPTH):
        self.trim_fraction = trim_fraction
        self.eps_inverse_depth = eps_inverse_depth

    def fit(self, X, y):
        x = np.asarray(X, dtype=np.float64).reshape(-1)
        targets = np.asarray(y, dtype=np.float64).reshape(-1)
        if x.shape != targets.shape:
            raise ValueError("X and y must have matching lengths")
        params = fit_scale(
            [Correspondence(float(a), float(b)) for a, b in zip(x, targets)],
            trim_fraction=self.trim_fraction,
        )
        self.alpha_ = params.alpha
        self.beta_ = params.beta
        self.n_points_ = x.size
        return self

    @property
    def params_(self) -> ScaleParams:
        if not hasattr(self, "alpha_"):
            raise NotFittedError("DepthScaler is not fitted yet")
        return ScaleParams(alpha=self.alpha_, beta=self.beta_)

    def transform(self, X):
        return apply_scale(X, self.params_, eps=self.eps_inverse_depth)
