"""Countermovement-jump height from keypoints, marker capture and force plates."""

__version__ = "0.1.0"

from .calibrate import ScaleCalibration, apply_ptm, fit_ptm_scale, minmax_normalize, reverse_minmax
from .forceplate import FlightWindow, detect_flight_windows, height_from_flight_time
from .kinemetrics import (
    AgreementResult,
    BlandAltmanResult,
    JumpMeasurement,
    bland_altman,
    icc_2_1,
    jump_height_from_displacement,
    test_retest_reliability,
)
from .model import (
    Constants,
    ForceTrace,
    JumpSegment,
    KeypointFrame,
    KeypointRecording,
    MarkerRecording,
    Method,
    RepetitionId,
    Source,
    Task,
    TimeSeries,
    Unit,
    flip_image_vertical,
)
from .preprocess import (
    DenoiseConfig,
    SegmentConfig,
    detect_failure,
    fft_resample,
    savgol_smooth,
    segment_repetitions,
    zscore_despike,
)
