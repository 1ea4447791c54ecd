"""Denoising, failure screening, repetition segmentation and resampling.

Typical order for one vertical track::

    clean = denoise(raw, DenoiseConfig())          # despike, then smooth
    segs = segment_repetitions(clean, SegmentConfig())
    up = fft_resample(segs[0].displacement, 201)
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import find_peaks, savgol_filter

from .exceptions import (
    AlignmentError,
    LengthError,
    SegmentationError,
    ValidationError,
)
from .model import JumpSegment, RepetitionId, Source, Task, TimeSeries


@dataclass(frozen=True)
class DenoiseConfig:
    """Despike/smoothing parameters.

    ``savgol_window`` is counted in samples at ``savgol_reference_hz`` and
    rescaled to the nearest odd length for streams sampled at other rates,
    so one setting gives the same smoothing span in seconds for 30 fps video
    and 100 Hz markers. Set ``savgol_reference_hz=None`` to apply the window
    verbatim at every rate.
    """

    zscore_window: int = 11
    zscore_threshold: float = 3.0
    savgol_window: int = 21
    savgol_order: int = 2
    savgol_reference_hz: float | None = 100.0

    def __post_init__(self):
        if self.zscore_window < 3 or self.zscore_window % 2 == 0:
            raise ValidationError("zscore_window must be an odd integer >= 3")
        if not self.zscore_threshold > 0:
            raise ValidationError("zscore_threshold must be positive")
        if self.savgol_window % 2 == 0:
            raise ValidationError("savgol_window must be odd")
        if self.savgol_order < 0 or self.savgol_window <= self.savgol_order:
            raise ValidationError("savgol_window must exceed savgol_order")
        if self.savgol_reference_hz is not None and not self.savgol_reference_hz > 0:
            raise ValidationError("savgol_reference_hz must be positive or None")

    def savgol_window_for(self, rate_hz: float) -> int:
        ref = self.savgol_reference_hz
        if ref is None or rate_hz == ref:
            return self.savgol_window
        scaled = self.savgol_window * rate_hz / ref
        window = 2 * int(round((scaled - 1) / 2)) + 1
        smallest = self.savgol_order + (1 if self.savgol_order % 2 == 0 else 2)
        return max(window, smallest)


@dataclass(frozen=True)
class SegmentConfig:
    half_window_s: float = 1.0
    min_peak_prominence_frac: float = 0.5
    min_peak_separation_s: float = 1.0
    expected_reps: int | None = 3

    def __post_init__(self):
        if not self.half_window_s > 0:
            raise ValidationError("half_window_s must be positive")
        if not 0 < self.min_peak_prominence_frac <= 1:
            raise ValidationError("min_peak_prominence_frac must be in (0, 1]")
        if not self.min_peak_separation_s > 0:
            raise ValidationError("min_peak_separation_s must be positive")
        if self.expected_reps is not None and self.expected_reps < 1:
            raise ValidationError("expected_reps must be positive")


# --------------------------------------------------------------------------
# despiking
# --------------------------------------------------------------------------


def _rolling_zscores(x: np.ndarray, window: int) -> np.ndarray:
    """|z| of each sample against its centred window, self excluded.

    Windows keep full width at the edges by sliding inward. A zero neighbour
    SD gives z = inf for any deviation and 0 otherwise.
    """
    n = x.shape[0]
    half = window // 2
    starts = np.clip(np.arange(n) - half, 0, n - window)
    rows = sliding_window_view(x, window)[starts]
    own = np.arange(n) - starts
    keep = np.ones_like(rows, dtype=bool)
    keep[np.arange(n), own] = False
    # offsets from the sample itself, so equal values cancel exactly
    neighbours = rows[keep].reshape(n, window - 1) - x[:, None]
    dev = np.abs(neighbours.mean(axis=1))
    sd = neighbours.std(axis=1, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, dev / sd, np.where(dev > 0, np.inf, 0.0))
    return z


def _despike(x: np.ndarray, window: int, threshold: float):
    """Iterate flag-and-interpolate until no unflagged sample is an outlier.

    The flag set only grows, so this stops after at most ``len(x)`` rounds.
    Flagged samples are re-interpolated from the original unflagged ones each
    round; unflagged samples are never touched.
    """
    n = x.shape[0]
    idx = np.arange(n)
    mask = np.zeros(n, dtype=bool)
    y = x.copy()
    for _ in range(n):
        fresh = (_rolling_zscores(y, window) > threshold) & ~mask
        if not fresh.any():
            break
        mask |= fresh
        if mask.all():
            break
        y = x.copy()
        y[mask] = np.interp(idx[mask], idx[~mask], x[~mask])
    return y, mask


def _check_length(series: TimeSeries, window: int, what: str) -> None:
    if len(series) < window:
        raise LengthError(f"{what} needs at least {window} samples, got {len(series)}")


def zscore_spike_mask(series: TimeSeries, cfg: DenoiseConfig = DenoiseConfig()) -> np.ndarray:
    """Boolean mask of the samples :func:`zscore_despike` would replace."""
    _check_length(series, cfg.zscore_window, "despiking")
    return _despike(series.samples.copy(), cfg.zscore_window, cfg.zscore_threshold)[1]


def zscore_despike(series: TimeSeries, cfg: DenoiseConfig = DenoiseConfig()) -> TimeSeries:
    """Replace rolling-z-score outliers by linear interpolation.

    Non-spike samples are returned bit-for-bit unchanged; spikes at either
    end take the value of the nearest clean sample.
    """
    _check_length(series, cfg.zscore_window, "despiking")
    y, _ = _despike(series.samples.copy(), cfg.zscore_window, cfg.zscore_threshold)
    return series.with_samples(y)


# --------------------------------------------------------------------------
# smoothing
# --------------------------------------------------------------------------


def savgol_smooth(series: TimeSeries, cfg: DenoiseConfig = DenoiseConfig()) -> TimeSeries:
    """Savitzky-Golay smoothing with polynomial-fit edges.

    Edge samples are taken from the polynomial fitted to the first/last full
    window rather than from a padded signal.
    """
    window = cfg.savgol_window_for(series.rate_hz)
    _check_length(series, window, "smoothing")
    out = savgol_filter(series.samples, window, cfg.savgol_order, mode="interp")
    return series.with_samples(out)


def denoise(series: TimeSeries, cfg: DenoiseConfig = DenoiseConfig()) -> TimeSeries:
    return savgol_smooth(zscore_despike(series, cfg), cfg)


# --------------------------------------------------------------------------
# peaks and segmentation
# --------------------------------------------------------------------------


def find_repetition_peaks(series: TimeSeries, cfg: SegmentConfig = SegmentConfig()) -> np.ndarray:
    """Indices of dominant peaks, in time order.

    A peak needs prominence of at least ``min_peak_prominence_frac`` of the
    series' total range; of two peaks closer than ``min_peak_separation_s``
    the lower is dropped.
    """
    x = series.samples
    if x.size < 3:
        return np.array([], dtype=int)
    amplitude = float(x.max() - x.min())
    if amplitude <= 0:
        return np.array([], dtype=int)
    peaks, _ = find_peaks(x, prominence=cfg.min_peak_prominence_frac * amplitude)
    # separation is enforced among prominent peaks only, tallest first
    distance = max(1.0, cfg.min_peak_separation_s * series.rate_hz)
    kept = []
    for i in sorted(peaks.tolist(), key=lambda j: -x[j]):
        if all(abs(i - k) >= distance for k in kept):
            kept.append(i)
    return np.array(sorted(kept), dtype=int)


def _apex_window(x: np.ndarray, peak: int, half: int):
    start = max(0, peak - half)
    stop = min(x.shape[0], peak + half + 1)
    higher = np.flatnonzero(x[start:peak] > x[peak])
    if higher.size:
        start += higher[-1] + 1
    higher = np.flatnonzero(x[peak + 1:stop] > x[peak])
    if higher.size:
        stop = peak + 1 + higher[0]
    return start, stop


@dataclass(frozen=True)
class Segmentation:
    """Result of :func:`segment_repetitions`; iterates over its segments."""

    segments: tuple
    peak_indices: tuple
    expected_reps: int | None = None

    @property
    def flagged(self) -> bool:
        """True when the repetition count differs from ``expected_reps``."""
        return self.expected_reps is not None and len(self.segments) != self.expected_reps

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, item):
        return self.segments[item]


def segment_repetitions(
    series: TimeSeries,
    cfg: SegmentConfig = SegmentConfig(),
    source: Source = Source.MMC,
    participant: str | None = None,
    task: Task | None = None,
) -> Segmentation:
    """Cut one segment of +/- ``half_window_s`` around every dominant peak.

    Windows are clipped to the series bounds, and further trimmed so no sample
    in a window exceeds its own peak.
    """
    peaks = find_repetition_peaks(series, cfg)
    if peaks.size == 0:
        raise SegmentationError("no peak satisfies the prominence requirement")
    half = int(round(cfg.half_window_s * series.rate_hz))
    x = series.samples
    segments = []
    for k, peak in enumerate(peaks, start=1):
        start, stop = _apex_window(x, int(peak), half)
        rep_id = RepetitionId(participant, task, k) if participant is not None and task is not None else None
        segments.append(
            JumpSegment(
                displacement=series.slice(start, stop),
                apex_index=int(peak) - start,
                source=source,
                repetition_id=rep_id,
                start_index=start,
            )
        )
    return Segmentation(tuple(segments), tuple(int(p) for p in peaks), cfg.expected_reps)


def cut_like(series: TimeSeries, reference: JumpSegment, source: Source | None = None) -> JumpSegment:
    """Cut ``series`` over the same sample window as ``reference``.

    Used to take the toe track over the window found on the hip. The new
    segment's apex is its own maximum.
    """
    start = reference.start_index
    stop = start + len(reference)
    if stop > len(series):
        raise AlignmentError("series is shorter than the reference window")
    piece = series.slice(start, stop)
    return JumpSegment(
        displacement=piece,
        apex_index=int(np.argmax(piece.samples)),
        source=reference.source if source is None else source,
        repetition_id=reference.repetition_id,
        start_index=start,
    )


# --------------------------------------------------------------------------
# failure screening
# --------------------------------------------------------------------------


class FailureReason(str, enum.Enum):
    LOW_CONFIDENCE = "low-confidence"
    EXCESSIVE_SPEED = "excessive-speed"
    NO_PEAK = "no-peak"


@dataclass(frozen=True)
class Verdict:
    valid: bool
    reason: FailureReason | None = None
    detail: str = ""

    def __bool__(self):
        return self.valid


def detect_failure(
    vertical_px: TimeSeries,
    confidence: TimeSeries,
    min_conf: float = 0.3,
    max_speed_px_per_frame: float | None = None,
    *,
    image_height_px: int | None = None,
    max_low_conf_fraction: float = 0.2,
    denoise_cfg: DenoiseConfig = DenoiseConfig(),
    segment_cfg: SegmentConfig = SegmentConfig(),
) -> Verdict:
    """Screen a keypoint track for pose-estimation failure.

    Checks run in order: share of low-confidence frames, then frame-to-frame
    jumps in the despiked track, then presence of at least one dominant peak.
    ``max_speed_px_per_frame`` defaults to a quarter of ``image_height_px``.
    """
    if len(vertical_px) != len(confidence):
        raise AlignmentError(
            f"track has {len(vertical_px)} samples but confidence has {len(confidence)}"
        )
    if max_speed_px_per_frame is None:
        if image_height_px is None:
            raise ValidationError("give max_speed_px_per_frame or image_height_px")
        max_speed_px_per_frame = 0.25 * image_height_px

    low = float(np.mean(confidence.samples < min_conf)) if len(confidence) else 1.0
    if low > max_low_conf_fraction:
        return Verdict(False, FailureReason.LOW_CONFIDENCE, f"{low:.0%} of frames below confidence {min_conf}")

    track = vertical_px
    if len(track) >= denoise_cfg.zscore_window:
        track = zscore_despike(track, denoise_cfg)
    if len(track) > 1:
        speed = float(np.max(np.abs(np.diff(track.samples))))
        if speed > max_speed_px_per_frame:
            return Verdict(
                False,
                FailureReason.EXCESSIVE_SPEED,
                f"{speed:.1f} px/frame exceeds {max_speed_px_per_frame:.1f}",
            )

    if find_repetition_peaks(track, segment_cfg).size == 0:
        return Verdict(False, FailureReason.NO_PEAK, "no dominant peak")
    return Verdict(True)


# --------------------------------------------------------------------------
# resampling
# --------------------------------------------------------------------------


def fft_resample(segment: TimeSeries, target_len: int) -> TimeSeries:
    """Fourier resampling to ``target_len`` samples over the same duration.

    The signal is treated as one period of a periodic sequence: the spectrum
    is zero-padded or truncated, with the Nyquist bin split (upsampling) or
    folded (downsampling) for even lengths. The DC bin is carried over
    unchanged, so the mean is preserved.
    """
    target_len = int(target_len)
    if target_len < 2:
        raise ValueError(f"target_len must be >= 2, got {target_len}")
    x = segment.samples
    n = x.shape[0]
    if n == 0:
        raise LengthError("cannot resample an empty series")
    new_rate = segment.rate_hz * target_len / n
    if n == target_len:
        return segment.with_samples(x, rate_hz=new_rate)

    spectrum = np.fft.rfft(x)
    out = np.zeros(target_len // 2 + 1, dtype=complex)
    m = min(n, target_len)
    keep = m // 2 + 1
    out[:keep] = spectrum[:keep]
    if m % 2 == 0:
        if target_len < n:
            out[m // 2] *= 2.0
        else:
            out[m // 2] *= 0.5
    y = np.fft.irfft(out, target_len) * (target_len / n)
    return segment.with_samples(y, rate_hz=new_rate)
