"""Flight time and jump height from vertical ground-reaction force."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import NoFlightError, SignalError, ValidationError
from .model import DEFAULT_CONSTANTS, Constants, ForceTrace


@dataclass(frozen=True)
class FlightWindow:
    """Samples ``toe_off_index`` .. ``landing_index - 1`` are airborne."""

    toe_off_index: int
    landing_index: int
    flight_time_s: float

    def __post_init__(self):
        if self.landing_index <= self.toe_off_index:
            raise ValidationError("landing_index must follow toe_off_index")
        if not self.flight_time_s > 0:
            raise ValidationError("flight_time_s must be positive")


@dataclass(frozen=True)
class FlightDetectionConfig:
    unload_fraction: float = 0.05
    loaded_fraction: float = 0.5
    noise_sd_multiplier: float = 5.0
    min_flight_s: float = 0.1
    max_flight_s: float = 1.0


def _runs(mask: np.ndarray):
    """(start, stop) pairs of maximal True runs."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return list(zip(edges[::2], edges[1::2]))


def stance_force(trace: ForceTrace, loaded_fraction: float = 0.5) -> float:
    """Median of the samples above ``loaded_fraction`` of the peak force."""
    f = trace.samples
    if f.size == 0 or not np.max(f) > 0:
        raise SignalError("force trace has no loaded region")
    return float(np.median(f[f > loaded_fraction * np.max(f)]))


def detect_flight_windows(
    trace: ForceTrace, cfg: FlightDetectionConfig = FlightDetectionConfig()
) -> list:
    """Locate every flight phase in a force trace.

    Candidate flights are runs below ``unload_fraction`` of the stance force.
    Inside each run the unloaded plate's noise band (mean + k*SD over the
    run interior) gives a tighter threshold; toe-off is the first sample of
    the run at or under it and landing the sample after the last one. Runs
    outside [min_flight_s, max_flight_s] are discarded.
    """
    f = trace.samples
    rate = trace.rate_hz
    stance = stance_force(trace, cfg.loaded_fraction)
    cutoff = cfg.unload_fraction * stance
    candidates = _runs(f < cutoff)
    if not candidates:
        raise NoFlightError("force never drops below the unloaded threshold")

    windows = []
    for start, stop in candidates:
        length = stop - start
        trim = max(1, length // 10) if length > 4 else 0
        interior = f[start + trim:stop - trim]
        band = float(np.mean(interior) + cfg.noise_sd_multiplier * np.std(interior))
        band = min(band, cutoff)
        below = np.flatnonzero(f[start:stop] <= band)
        if below.size == 0:
            continue
        toe_off = start + int(below[0])
        landing = start + int(below[-1]) + 1
        flight = (landing - toe_off) / rate
        if cfg.min_flight_s <= flight <= cfg.max_flight_s:
            windows.append(FlightWindow(toe_off, landing, flight))
    return windows


def height_from_flight_time(flight_time_s: float, constants: Constants = DEFAULT_CONSTANTS) -> float:
    """Jump height in centimetres, ``100 * g * T**2 / 8``."""
    if not flight_time_s > 0:
        raise ValidationError(f"flight time must be positive, got {flight_time_s}")
    return 100.0 * constants.g * flight_time_s**2 / 8.0
