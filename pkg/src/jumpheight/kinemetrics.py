"""Jump heights from displacement and method-agreement statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError, NonPhysicalError, PairingError, ValidationError
from .model import JumpSegment, Method, RepetitionId, Unit

LOA_Z = 1.96


@dataclass(frozen=True)
class JumpMeasurement:
    repetition_id: RepetitionId
    method: Method
    height_cm: float

    def __post_init__(self):
        if not (math.isfinite(self.height_cm) and self.height_cm >= 0):
            raise ValidationError(f"height must be finite and non-negative, got {self.height_cm}")
        object.__setattr__(self, "method", Method(self.method))


@dataclass(frozen=True)
class BlandAltmanResult:
    bias_cm: float
    sd_cm: float
    loa_low_cm: float
    loa_high_cm: float
    n: int


@dataclass(frozen=True)
class AgreementResult:
    icc_2_1: float
    method_pair: tuple | None
    n: int
    k: int = 2

    @property
    def negative(self) -> bool:
        return self.icc_2_1 < 0


def jump_height_from_displacement(segment: JumpSegment, baseline_fraction: float = 0.1) -> float:
    """Apex height above the pre-jump stance level, in centimetres.

    The stance level is the median of the first ``baseline_fraction`` of the
    segment (at least one sample).
    """
    track = segment.displacement
    track.require_unit(Unit.MILLIMETRES)
    x = track.samples
    if x.size == 0:
        raise NonPhysicalError("empty segment")
    head = max(1, int(math.ceil(baseline_fraction * x.size)))
    baseline = float(np.median(x[:head]))
    peak = float(np.max(x))
    if not peak > baseline:
        raise NonPhysicalError(f"segment maximum {peak:.3f} mm does not exceed stance level {baseline:.3f} mm")
    return (peak - baseline) / 10.0


def _as_matrix(ratings) -> np.ndarray:
    y = np.asarray(ratings, dtype=float)
    if y.ndim != 2:
        raise ValueError(f"ratings must be a 2-D targets x raters matrix, got shape {y.shape}")
    n, k = y.shape
    if n < 2 or k < 2:
        raise ValueError(f"need at least 2 targets and 2 raters, got {n} x {k}")
    if not np.all(np.isfinite(y)):
        raise InputError("ratings matrix has missing or non-finite cells")
    return y


def anova_mean_squares(ratings):
    """Two-way ANOVA mean squares ``(MSR, MSC, MSE)`` of a complete matrix.

    Rows are targets and columns raters; one observation per cell.
    """
    y = _as_matrix(ratings)
    n, k = y.shape
    grand = y.mean()
    row_means = y.mean(axis=1)
    col_means = y.mean(axis=0)
    ss_rows = k * np.sum((row_means - grand) ** 2)
    ss_cols = n * np.sum((col_means - grand) ** 2)
    ss_err = np.sum((y - row_means[:, None] - col_means[None, :] + grand) ** 2)
    return ss_rows / (n - 1), ss_cols / (k - 1), ss_err / ((n - 1) * (k - 1))


def icc_2_1(ratings, method_pair=None) -> AgreementResult:
    """ICC(2,1): two-way random effects, absolute agreement, single rater.

    ``(MSR - MSE) / (MSR + (k-1) MSE + k/n (MSC - MSE))``. Negative values
    are returned as computed.
    """
    y = _as_matrix(ratings)
    n, k = y.shape
    if np.ptp(y) == 0:
        raise InputError("all ratings are equal; ICC undefined")
    msr, msc, mse = anova_mean_squares(y)
    denom = msr + (k - 1) * mse + (k / n) * (msc - mse)
    if denom == 0:
        raise InputError("ratings have no variance; ICC undefined")
    return AgreementResult(float((msr - mse) / denom), method_pair, n, k)


def bland_altman(a, b) -> BlandAltmanResult:
    """Bias (mean of ``a - b``) and 95% limits of agreement.

    The SD of the differences uses the n-1 denominator.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise PairingError(f"paired samples must be 1-D and equal length, got {a.shape} and {b.shape}")
    if a.size < 2:
        raise InputError("Bland-Altman needs at least 2 pairs")
    diffs = a - b
    bias = float(np.mean(diffs))
    sd = float(np.std(diffs, ddof=1))
    return BlandAltmanResult(bias, sd, bias - LOA_Z * sd, bias + LOA_Z * sd, int(a.size))


def bland_altman_points(a, b):
    """Per-pair ``(mean, difference)`` arrays for a Bland-Altman plot."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise PairingError("paired samples differ in length")
    return (a + b) / 2.0, a - b


def test_retest_reliability(heights) -> float:
    """ICC(2,1) across repetitions of one method.

    ``heights`` is participants x repetitions; rows with any missing
    repetition (NaN) are dropped first.
    """
    y = np.asarray(heights, dtype=float)
    if y.ndim != 2:
        raise ValueError("heights must be a participants x repetitions matrix")
    complete = y[np.all(np.isfinite(y), axis=1)]
    if complete.shape[0] < 2:
        raise InputError(f"only {complete.shape[0]} participant(s) with all repetitions")
    return icc_2_1(complete).icc_2_1


test_retest_reliability.__test__ = False  # not a pytest test despite the name
