"""Shared fixtures and independent oracles used across the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from distmon.geometry import CameraIntrinsics


def make_intrinsics(
    fx=1000.0, fy=1000.0, cx=500.0, cy=400.0, width=1000, height=800
) -> CameraIntrinsics:
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)


def brute_force_scale_fit(xs, ys) -> tuple[float, float]:
    """Independent normal-equation oracle: the explicit 2x2 inverse of

        [ n       sum(x)   ] [alpha]   [ sum(y)   ]
        [ sum(x)  sum(x^2) ] [beta ] = [ sum(x y) ]

    computed without centering, shared code or numpy solvers.
    """
    xs = [float(v) for v in xs]
    ys = [float(v) for v in ys]
    n = len(xs)
    sx = sum(xs)
    sxx = sum(v * v for v in xs)
    sy = sum(ys)
    sxy = sum(a * b for a, b in zip(xs, ys))
    det = n * sxx - sx * sx
    if det == 0:
        raise ZeroDivisionError("singular normal equations")
    alpha = (sxx * sy - sx * sxy) / det
    beta = (n * sxy - sx * sy) / det
    return alpha, beta


def rotation_angle(r_est: np.ndarray, r_true: np.ndarray) -> float:
    """Geodesic angle between two rotations in radians."""
    cos = (np.trace(r_est @ r_true.T) - 1.0) / 2.0
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


@pytest.fixture
def k1000() -> CameraIntrinsics:
    return make_intrinsics()
