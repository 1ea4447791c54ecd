"""Input checks shared by the array-facing estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ValidationError
from .model import TimeSeries


def check_signals(X, *, min_length: int = 1) -> tuple[np.ndarray, bool]:
    """Coerce ``X`` to a float matrix of shape (n_timepoints, n_signals).

    A 1-D input is treated as a single signal. The second return value says
    whether the input was 1-D, so callers can hand back the same shape.
    """
    if isinstance(X, TimeSeries):
        X = X.samples
    arr = check_array(X, ensure_2d=False, dtype=np.float64, ensure_all_finite=True, copy=True)
    was_1d = arr.ndim == 1
    if was_1d:
        arr = arr[:, None]
    if arr.shape[0] < min_length:
        raise ValidationError(f"signals need at least {min_length} samples, got {arr.shape[0]}")
    return arr, was_1d


def restore_shape(arr: np.ndarray, was_1d: bool) -> np.ndarray:
    return arr[:, 0] if was_1d else arr


def check_rate(rate_hz) -> float:
    rate = float(rate_hz)
    if not (np.isfinite(rate) and rate > 0):
        raise ValidationError(f"rate_hz must be positive, got {rate_hz}")
    return rate


def check_paired(a, b) -> tuple[np.ndarray, np.ndarray]:
    """Two equal-length 1-D float vectors."""
    a = check_array(a, ensure_2d=False, dtype=np.float64).ravel()
    b = check_array(b, ensure_2d=False, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"paired inputs differ in length: {a.size} vs {b.size}")
    return a, b
