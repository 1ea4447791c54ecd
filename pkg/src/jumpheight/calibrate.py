"""Pixel-to-millimetre rescaling of markerless tracks.

Two routes:

* reverse min-max (:func:`reverse_minmax`) maps a pixel track onto the range
  of a simultaneously recorded marker track. It needs the marker data, so it
  is for evaluating the markerless pipeline only, never for standalone use.
* gravity calibration (:func:`fit_ptm_scale` + :func:`apply_ptm`) reads the
  mm/px factor off the hip's free fall after the jump apex.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CalibrationError, DegenerateRangeError, ValidationError
from .model import DEFAULT_CONSTANTS, Constants, RepetitionId, TimeSeries, Unit


@dataclass(frozen=True)
class ScaleCalibration:
    r_mm_per_px: float
    free_fall_duration_s: float
    source_segment: RepetitionId | None = None
    fallback: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.r_mm_per_px) and self.r_mm_per_px > 0):
            raise ValidationError(f"r_mm_per_px must be positive, got {self.r_mm_per_px}")
        if not (np.isfinite(self.free_fall_duration_s) and self.free_fall_duration_s > 0):
            raise ValidationError(f"free_fall_duration_s must be positive, got {self.free_fall_duration_s}")


def _range(x: np.ndarray, what: str):
    lo, hi = float(np.min(x)), float(np.max(x))
    if not hi > lo:
        raise DegenerateRangeError(f"{what} is constant; min-max range is zero")
    return lo, hi


def minmax_normalize(series: TimeSeries) -> TimeSeries:
    lo, hi = _range(series.samples, "series")
    return series.with_samples((series.samples - lo) / (hi - lo), unit=Unit.NORMALIZED)


def reverse_minmax(mmc_px: TimeSeries, omc_mm: TimeSeries) -> TimeSeries:
    """Rescale a pixel track onto the millimetre range of a marker track.

    Evaluation only: the output range is copied from ``omc_mm``. Both inputs
    should cover the same repetition window (``mmc_px`` already resampled to
    the marker length if the rates differ).
    """
    mmc_px.require_unit(Unit.PIXELS)
    omc_mm.require_unit(Unit.MILLIMETRES)
    unit = minmax_normalize(mmc_px).samples
    lo, hi = _range(omc_mm.samples, "reference track")
    return mmc_px.with_samples(unit * (hi - lo) + lo, unit=Unit.MILLIMETRES)


def _subframe_vertex(before: float, at: float, after: float):
    """Vertex of the parabola through three equally spaced samples.

    Returns ``(offset, height)`` with ``offset`` in samples relative to the
    middle one, in [-0.5, 0.5] when the middle sample is the largest.
    """
    curvature = before - 2.0 * at + after
    if curvature >= 0:
        return 0.0, at
    offset = 0.5 * (before - after) / curvature
    return offset, at - 0.25 * (before - after) * offset


FALL_READINGS = ("fit", "vertex", "frame")


def _fall_from_fit(x, apex, steps):
    """Fall time (in samples) and drop read off a least-squares parabola.

    The parabola is fitted to the samples strictly within ``steps`` of the
    apex; the sample at ``steps`` itself may already be past landing, so the
    fall is read off the parabola from its vertex to that sample's time.
    """
    lo = max(0, apex - steps + 1)
    idx = np.arange(lo, apex + steps)
    if idx.size < 3:
        raise CalibrationError("too few samples around the apex for a free-fall fit")
    t = (idx - apex).astype(float)
    curv, slope, _ = np.polyfit(t, x[idx], 2)
    if not curv < 0:
        raise CalibrationError("hip track around the apex is not concave")
    vertex = -slope / (2.0 * curv)
    fall = steps - vertex
    return fall, -curv * fall**2


def fit_ptm_scale(
    hip_px_up: TimeSeries,
    apex_index: int,
    constants: Constants = DEFAULT_CONSTANTS,
    fall_fraction: float = 0.4,
    *,
    reading: str = "fit",
    source_segment: RepetitionId | None = None,
) -> ScaleCalibration:
    """Millimetres per pixel from the hip's free fall after the apex.

    The fall is followed from the apex to the first sample whose drop
    reaches ``fall_fraction`` of (apex - segment minimum), so landing and
    countermovement motion stay out of it. A body falling from rest covers
    ``500 * T**2 * g`` mm in ``T`` seconds; with the observed pixel drop
    ``d`` over the same time, ``R = 500 * T**2 * g / d``.

    ``reading`` selects how ``T`` and ``d`` are read from the track:

    ``"fit"``
        From a least-squares parabola over the airborne samples around the
        apex (from vertex to the fall sample). Exact on ballistic data and
        the least noise-sensitive.
    ``"vertex"``
        Apex time and height refined by the parabola through the apex sample
        and its two neighbours; drop taken at the fall sample.
    ``"frame"``
        Apex sample to fall sample, ``T`` a whole number of frames.
    """
    hip_px_up.require_unit(Unit.PIXELS)
    if not 0 < fall_fraction < 1:
        raise ValidationError("fall_fraction must be in (0, 1)")
    if reading not in FALL_READINGS:
        raise ValidationError(f"reading must be one of {FALL_READINGS}, got {reading!r}")
    x = hip_px_up.samples
    n = x.shape[0]
    if not 0 <= apex_index < n:
        raise ValidationError(f"apex_index {apex_index} outside series of length {n}")
    if x[apex_index] < x.max():
        raise ValidationError("apex_index is not the segment maximum")
    amplitude = x[apex_index] - x.min()
    if amplitude <= 0:
        raise CalibrationError("hip track is flat; no fall to measure")

    drops = x[apex_index] - x[apex_index + 1:]
    reached = np.flatnonzero(drops >= fall_fraction * amplitude)
    if reached.size == 0:
        raise CalibrationError("hip never falls far enough after the apex within the segment")
    steps = int(reached[0]) + 1

    if reading == "fit":
        fall, drop_px = _fall_from_fit(x, apex_index, steps)
    else:
        offset, peak = 0.0, float(x[apex_index])
        if reading == "vertex" and 0 < apex_index < n - 1:
            offset, peak = _subframe_vertex(x[apex_index - 1], x[apex_index], x[apex_index + 1])
        fall = steps - offset
        drop_px = abs(peak - x[apex_index + steps])
    fall_s = fall / hip_px_up.rate_hz
    if drop_px == 0 or fall_s <= 0:
        raise CalibrationError("zero pixel drop over the fall window")
    r = 500.0 * fall_s**2 * constants.g / drop_px
    return ScaleCalibration(r, fall_s, source_segment)


def mean_calibration(calibrations) -> ScaleCalibration:
    """Average of several calibrations, marked as a fallback value."""
    cals = list(calibrations)
    if not cals:
        raise CalibrationError("no calibrations to average")
    return ScaleCalibration(
        float(np.mean([c.r_mm_per_px for c in cals])),
        float(np.mean([c.free_fall_duration_s for c in cals])),
        None,
        fallback=True,
    )


def apply_ptm(series_px: TimeSeries, cal: ScaleCalibration) -> TimeSeries:
    series_px.require_unit(Unit.PIXELS)
    return series_px.with_samples(cal.r_mm_per_px * series_px.samples, unit=Unit.MILLIMETRES)
