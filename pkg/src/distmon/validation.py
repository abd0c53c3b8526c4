"""Small input-validation helpers shared by the estimator-style API.

Kept deliberately close to what ``sklearn.utils.check_array`` provides but
specialised for this package's inputs: point arrays, pixel arrays and
dense per-pixel maps.
"""

from __future__ import annotations

import numpy as np


def as_float_array(x, name: str, *, shape=None, ndim=None) -> np.ndarray:
    """Coerce to a float64 ndarray and check finiteness plus shape.

    ``shape`` entries of ``None`` act as wildcards, e.g. ``(None, 3)``
    accepts any number of rows with exactly three columns.
    """
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if shape is not None:
        if arr.ndim != len(shape):
            raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
        for want, got in zip(shape, arr.shape):
            if want is not None and want != got:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_finite_scalar(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def check_map(values, name: str) -> np.ndarray:
    """Validate a dense per-pixel map: 2-D, finite, float."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_label_mask(labels, name: str = "mask") -> np.ndarray:
    """Validate an instance-label image: 2-D, integer, non-negative."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must have an integer dtype, got {arr.dtype}")
    if arr.size and arr.min() < 0:
        raise ValueError(f"{name} labels must be non-negative")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, name_a: str, name_b: str) -> None:
    if a.shape != b.shape:
        raise ValueError(
            f"{name_a} and {name_b} must share dimensions, "
            f"got {a.shape} vs {b.shape}"
        )


def round_half_down(x):
    """Round to nearest integer with ties toward negative infinity.

    Used everywhere a continuous pixel coordinate becomes an integer
    pixel so that outputs are byte-reproducible.
    """
    return np.ceil(np.asarray(x, dtype=np.float64) - 0.5).astype(np.int64)
