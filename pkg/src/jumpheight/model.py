"""Core value types shared by every pipeline stage.

All types are immutable once built. Sample arrays are stored as read-only
float64 numpy arrays so they can be shared between threads without copies.

Axis convention: everything downstream of ingestion is vertical-up.
Camera keypoints arrive with a top-left image origin and are flipped once
by :func:`flip_image_vertical`; marker ``z`` and force are already
up-positive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, NamedTuple

import numpy as np

from .exceptions import UnitMismatchError, ValidationError


class Unit(str, enum.Enum):
    PIXELS = "px"
    MILLIMETRES = "mm"
    CENTIMETRES = "cm"
    NEWTONS = "N"
    NORMALIZED = "1"


class Task(str, enum.Enum):
    BILATERAL = "Bilateral"
    UNILATERAL = "Unilateral"

    @classmethod
    def parse(cls, text: str) -> "Task":
        key = text.strip().lower()
        for member in cls:
            if member.value.lower() == key or member.value[0].lower() + "l" == key:
                return member
        raise ValidationError(f"unknown task {text!r}; expected Bilateral or Unilateral")


class Source(str, enum.Enum):
    MMC = "MMC"
    OMC = "OMC"
    FP = "FP"


class Method(str, enum.Enum):
    FP = "FP"
    OMC = "OMC"
    RMM = "RMM"
    PTM = "PTM"


class RepetitionId(NamedTuple):
    participant: str
    task: Task
    rep: int

    def label(self) -> str:
        return f"{self.participant}/{self.task.value}/{self.rep}"


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled 1-D signal with its rate and unit."""

    samples: np.ndarray
    rate_hz: float
    unit: Unit

    def __post_init__(self):
        arr = _frozen_array(self.samples)
        if arr.ndim != 1:
            raise ValidationError(f"TimeSeries samples must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("TimeSeries samples must all be finite")
        rate = float(self.rate_hz)
        if not (np.isfinite(rate) and rate > 0):
            raise ValidationError(f"rate_hz must be positive, got {self.rate_hz!r}")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "rate_hz", rate)
        object.__setattr__(self, "unit", Unit(self.unit))

    def __len__(self):
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (
            self.unit == other.unit
            and self.rate_hz == other.rate_hz
            and np.array_equal(self.samples, other.samples)
        )

    __hash__ = None

    @property
    def duration_s(self) -> float:
        return len(self) / self.rate_hz

    def with_samples(self, samples, unit: Unit | None = None, rate_hz: float | None = None) -> "TimeSeries":
        return TimeSeries(
            samples,
            self.rate_hz if rate_hz is None else rate_hz,
            self.unit if unit is None else unit,
        )

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return self.with_samples(self.samples[start:stop])

    def require_unit(self, *units: Unit) -> None:
        if self.unit not in units:
            names = ", ".join(u.name for u in units)
            raise UnitMismatchError(f"expected unit {names}, got {self.unit.name}")


@dataclass(frozen=True, eq=False)
class KeypointFrame:
    """One frame of 2-D pose output: ``joints`` is a (K, 3) array of x, y, confidence."""

    index: int
    joints: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.joints)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValidationError(f"joints must have shape (K, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"frame {self.index}: non-finite keypoint value")
        conf = arr[:, 2]
        if np.any((conf < 0) | (conf > 1)):
            raise ValidationError(f"frame {self.index}: confidence outside [0, 1]")
        object.__setattr__(self, "joints", arr)
        object.__setattr__(self, "index", int(self.index))

    @property
    def n_joints(self) -> int:
        return self.joints.shape[0]


@dataclass(frozen=True, eq=False)
class KeypointRecording:
    frames: tuple
    fps: float
    joint_map: Mapping[str, int]
    image_height_px: int

    def __post_init__(self):
        frames = tuple(self.frames)
        if not (self.fps > 0 and np.isfinite(self.fps)):
            raise ValidationError(f"fps must be positive, got {self.fps!r}")
        if int(self.image_height_px) <= 0:
            raise ValidationError("image_height_px must be a positive integer")
        counts = {f.n_joints for f in frames}
        if len(counts) > 1:
            raise ValidationError(f"frames disagree on joint count: {sorted(counts)}")
        k = counts.pop() if counts else len(self.joint_map)
        if len(self.joint_map) != k:
            raise ValidationError(f"joint_map names {len(self.joint_map)} joints but frames carry {k}")
        if sorted(self.joint_map.values()) != list(range(k)):
            raise ValidationError("joint_map indices must be 0..K-1")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "fps", float(self.fps))
        object.__setattr__(self, "image_height_px", int(self.image_height_px))
        object.__setattr__(self, "joint_map", MappingProxyType(dict(self.joint_map)))

    @property
    def n_joints(self) -> int:
        return len(self.joint_map)

    def joint_names(self) -> list:
        return sorted(self.joint_map, key=self.joint_map.__getitem__)

    def as_array(self) -> np.ndarray:
        """Stacked (n_frames, K, 3) copy of all frames."""
        if not self.frames:
            return np.empty((0, self.n_joints, 3))
        return np.stack([f.joints for f in self.frames])


@dataclass(frozen=True, eq=False)
class MarkerRecording:
    """3-D marker trajectories in millimetres keyed by marker name."""

    markers: Mapping[str, tuple]
    rate_hz: float
    vertical_axis: str = "z"

    def __post_init__(self):
        if not (self.rate_hz > 0 and np.isfinite(self.rate_hz)):
            raise ValidationError(f"rate_hz must be positive, got {self.rate_hz!r}")
        if self.vertical_axis not in ("x", "y", "z"):
            raise ValidationError(f"vertical_axis must be x, y or z, got {self.vertical_axis!r}")
        checked = {}
        for name, triple in self.markers.items():
            triple = tuple(triple)
            if len(triple) != 3:
                raise ValidationError(f"marker {name!r} needs an (x, y, z) triple")
            for axis in triple:
                axis.require_unit(Unit.MILLIMETRES)
            if len({len(axis) for axis in triple}) != 1:
                raise ValidationError(f"marker {name!r} axes have unequal lengths")
            checked[name] = triple
        object.__setattr__(self, "rate_hz", float(self.rate_hz))
        object.__setattr__(self, "markers", MappingProxyType(checked))

    def axis(self, name: str, axis: str) -> TimeSeries:
        return self.markers[name]["xyz".index(axis)]


@dataclass(frozen=True, eq=False)
class ForceTrace:
    """Vertical ground-reaction force in newtons."""

    force: TimeSeries

    def __post_init__(self):
        self.force.require_unit(Unit.NEWTONS)

    @property
    def rate_hz(self) -> float:
        return self.force.rate_hz

    @property
    def samples(self) -> np.ndarray:
        return self.force.samples

    def __len__(self):
        return len(self.force)


@dataclass(frozen=True, eq=False)
class JumpSegment:
    """One repetition cut from a longer vertical-displacement stream.

    ``apex_index`` is relative to the segment and always points at the
    segment's global maximum. ``start_index`` locates the segment inside the
    stream it was cut from.
    """

    displacement: TimeSeries
    apex_index: int
    source: Source
    repetition_id: RepetitionId | None = None
    start_index: int = 0

    def __post_init__(self):
        n = len(self.displacement)
        if not 0 <= self.apex_index < n:
            raise ValidationError(f"apex_index {self.apex_index} outside segment of length {n}")
        values = self.displacement.samples
        if values[self.apex_index] < values.max():
            raise ValidationError("apex_index does not point at the segment maximum")
        object.__setattr__(self, "source", Source(self.source))

    def __len__(self):
        return len(self.displacement)

    @property
    def apex_time_s(self) -> float:
        return (self.start_index + self.apex_index) / self.displacement.rate_hz


@dataclass(frozen=True)
class Constants:
    g: float = 9.81  # m/s^2

    def __post_init__(self):
        if not (self.g > 0 and np.isfinite(self.g)):
            raise ValidationError(f"g must be positive, got {self.g!r}")


DEFAULT_CONSTANTS = Constants()


def flip_image_vertical(series: TimeSeries, image_height_px: int) -> TimeSeries:
    """Reflect image-row coordinates (origin top-left) into up-positive pixels."""
    series.require_unit(Unit.PIXELS)
    return series.with_samples(image_height_px - series.samples)
