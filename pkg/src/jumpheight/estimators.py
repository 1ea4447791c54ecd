"""scikit-learn style wrappers over the signal and calibration functions.

Signals are columns: ``X`` has shape (n_timepoints, n_signals), or is a 1-D
array for one signal. The wrappers hold parameters only and delegate to the
:class:`~jumpheight.model.TimeSeries` functions, so both routes give the
same numbers.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .calibrate import fit_ptm_scale, reverse_minmax
from .forceplate import FlightDetectionConfig, detect_flight_windows, height_from_flight_time
from .model import Constants, ForceTrace, TimeSeries, Unit
from .preprocess import DenoiseConfig, fft_resample, savgol_smooth, zscore_despike
from .validation import check_rate, check_signals, restore_shape


def _columns(X, fn, unit=Unit.PIXELS, rate_hz=1.0, min_length=1):
    arr, was_1d = check_signals(X, min_length=min_length)
    cols = [fn(TimeSeries(arr[:, j], rate_hz, unit)).samples for j in range(arr.shape[1])]
    return restore_shape(np.column_stack(cols), was_1d)


class _Stateless(TransformerMixin, BaseEstimator):
    def fit(self, X, y=None):
        arr, _ = check_signals(X)
        self.n_features_in_ = arr.shape[1]
        return self


class ZScoreDespiker(_Stateless):
    """Rolling z-score spike removal, column by column."""

    def __init__(self, window=11, threshold=3.0):
        self.window = window
        self.threshold = threshold

    def transform(self, X):
        cfg = DenoiseConfig(zscore_window=self.window, zscore_threshold=self.threshold)
        return _columns(X, lambda s: zscore_despike(s, cfg), min_length=self.window)


class SavgolSmoother(_Stateless):
    """Savitzky-Golay smoothing.

    With ``reference_hz`` set, ``window`` is counted at that rate and rescaled
    to ``rate_hz``; leave ``reference_hz=None`` to use ``window`` as given.
    """

    def __init__(self, window=21, order=2, rate_hz=100.0, reference_hz=None):
        self.window = window
        self.order = order
        self.rate_hz = rate_hz
        self.reference_hz = reference_hz

    def transform(self, X):
        cfg = DenoiseConfig(savgol_window=self.window, savgol_order=self.order, savgol_reference_hz=self.reference_hz)
        rate = check_rate(self.rate_hz)
        return _columns(X, lambda s: savgol_smooth(s, cfg), rate_hz=rate)


class FourierResampler(_Stateless):
    def __init__(self, target_len=100):
        self.target_len = target_len

    def transform(self, X):
        return _columns(X, lambda s: fft_resample(s, self.target_len))


class ReverseMinMaxScaler(TransformerMixin, BaseEstimator):
    """Map pixel tracks onto the range of a reference millimetre track.

    ``fit(X, y)`` records the min and range of ``y`` (the marker track);
    ``transform(X)`` min-max normalizes each column of ``X`` and stretches it
    onto that range. Evaluation only, since it needs the reference.
    """

    def fit(self, X, y):
        ref, _ = check_signals(y)
        arr, _ = check_signals(X)
        if ref.shape[1] not in (1, arr.shape[1]):
            raise ValueError("y must have one column or one per column of X")
        self.reference_min_ = ref.min(axis=0)
        self.reference_range_ = np.ptp(ref, axis=0)
        self.n_features_in_ = arr.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "reference_range_")
        arr, was_1d = check_signals(X)
        lo = np.broadcast_to(self.reference_min_, (arr.shape[1],))
        span = np.broadcast_to(self.reference_range_, (arr.shape[1],))
        cols = []
        for j in range(arr.shape[1]):
            ref = TimeSeries(np.array([lo[j], lo[j] + span[j]]), 1.0, Unit.MILLIMETRES)
            cols.append(reverse_minmax(TimeSeries(arr[:, j], 1.0, Unit.PIXELS), ref).samples)
        return restore_shape(np.column_stack(cols), was_1d)


class PixelToMetricScaler(TransformerMixin, BaseEstimator):
    """Gravity calibration: learn mm/px from a hip track's free fall.

    ``fit`` takes one up-positive hip segment in pixels with the jump apex at
    its maximum; ``transform`` multiplies any pixel track by the learned
    ``r_mm_per_px_``.
    """

    def __init__(self, rate_hz=30.0, fall_fraction=0.4, reading="fit", g=9.81):
        self.rate_hz = rate_hz
        self.fall_fraction = fall_fraction
        self.reading = reading
        self.g = g

    def fit(self, X, y=None):
        arr, was_1d = check_signals(X, min_length=3)
        if not was_1d and arr.shape[1] != 1:
            raise ValueError("fit expects a single hip track")
        hip = TimeSeries(arr[:, 0], check_rate(self.rate_hz), Unit.PIXELS)
        cal = fit_ptm_scale(
            hip, int(np.argmax(hip.samples)), Constants(g=self.g), self.fall_fraction, reading=self.reading
        )
        self.r_mm_per_px_ = cal.r_mm_per_px
        self.free_fall_duration_s_ = cal.free_fall_duration_s
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "r_mm_per_px_")
        arr, was_1d = check_signals(X)
        return restore_shape(arr * self.r_mm_per_px_, was_1d)


class FlightTimeJumpHeight(BaseEstimator):
    """Jump heights (cm) from a vertical force trace, one per flight."""

    def __init__(self, rate_hz=1000.0, g=9.81, unload_fraction=0.05, noise_sd_multiplier=5.0):
        self.rate_hz = rate_hz
        self.g = g
        self.unload_fraction = unload_fraction
        self.noise_sd_multiplier = noise_sd_multiplier

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        arr, was_1d = check_signals(X, min_length=2)
        if not was_1d and arr.shape[1] != 1:
            raise ValueError("predict expects a single force trace")
        trace = ForceTrace(TimeSeries(arr[:, 0], check_rate(self.rate_hz), Unit.NEWTONS))
        cfg = FlightDetectionConfig(
            unload_fraction=self.unload_fraction, noise_sd_multiplier=self.noise_sd_multiplier
        )
        constants = Constants(g=self.g)
        return np.array(
            [height_from_flight_time(w.flight_time_s, constants) for w in detect_flight_windows(trace, cfg)]
        )
