"""Readers and writers for keypoint, marker, force and session-manifest files.

File layouts
------------
Keypoints (line-oriented text)::

    #fps=30
    #image_height=720
    #joints=RHip,RSmallToe
    0, 640.0,400.0,0.93, 652.0,700.0,0.88
    1, ...

Markers (comma separated, millimetres)::

    #rate_hz=100
    time_s,hip_x,hip_y,hip_z,toe_x,toe_y,toe_z
    0.0,...

Force (comma separated, newtons); the time column is optional when the
rate is declared::

    #rate_hz=1000
    time_s,fz_n
    0.0,702.1

Manifest (``key=value`` text, paths relative to the manifest)::

    participant_id=P01
    task=Bilateral
    keypoints=P01_BL_keypoints.txt
    ...
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import (
    FormatError,
    GapError,
    NameLookupError,
    ParseError,
    ValidationError,
)
from .model import (
    ForceTrace,
    KeypointFrame,
    KeypointRecording,
    MarkerRecording,
    Task,
    TimeSeries,
    Unit,
    flip_image_vertical,
)

DEFAULT_HIP_JOINT = "RHip"
DEFAULT_TOE_JOINT = "RSmallToe"

# BODY_25 ordering; small-toe joints are 20 (left) and 23 (right).
BODY_25_JOINTS = (
    "Nose", "Neck", "RShoulder", "RElbow", "RWrist", "LShoulder", "LElbow",
    "LWrist", "MidHip", "RHip", "RKnee", "RAnkle", "LHip", "LKnee", "LAnkle",
    "REye", "LEye", "REar", "LEar", "LBigToe", "LSmallToe", "LHeel",
    "RBigToe", "RSmallToe", "RHeel",
)

TIME_SPACING_TOL_S = 1e-6


def _fmt(value) -> str:
    return repr(float(value))


def _read_lines(path):
    path = Path(path)
    try:
        text = path.read_text()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not a text file") from exc
    return text.splitlines()


def _split_header(lines):
    """Separate ``#key=value`` lines from data lines (blank lines dropped).

    Returns ``(header, body)`` where ``body`` is a list of
    ``(line_number, text)`` pairs, 1-based line numbers.
    """
    header = {}
    body = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            content = line[1:].strip()
            if "=" in content:
                key, value = content.split("=", 1)
                header[key.strip().lower()] = value.strip()
            continue
        body.append((lineno, line))
    return header, body


def _to_float(text, row, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"non-numeric value {text!r} at row {row}, column {column}", row=row, column=column
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r} at row {row}, column {column}", row=row, column=column)
    return value


def _positive_rate(text, key):
    try:
        rate = float(text)
    except (TypeError, ValueError):
        raise FormatError(f"header {key}={text!r} is not a number") from None
    if not (math.isfinite(rate) and rate > 0):
        raise ValidationError(f"header {key} must be positive, got {text}")
    return rate


# --------------------------------------------------------------------------
# keypoints
# --------------------------------------------------------------------------


def parse_keypoints(path) -> KeypointRecording:
    header, body = _split_header(_read_lines(path))
    for key in ("fps", "image_height", "joints"):
        if key not in header:
            raise FormatError(f"{path}: missing #{key}= header")
    fps = _positive_rate(header["fps"], "fps")
    try:
        height = int(float(header["image_height"]))
    except ValueError:
        raise FormatError(f"{path}: bad image_height {header['image_height']!r}") from None
    if height <= 0:
        raise ValidationError(f"{path}: image_height must be positive")
    names = [n.strip() for n in header["joints"].split(",") if n.strip()]
    if not names:
        raise FormatError(f"{path}: empty joint list")
    if len(set(names)) != len(names):
        raise FormatError(f"{path}: duplicate joint names")
    k = len(names)
    if not body:
        raise FormatError(f"{path}: no frames")

    frames = {}
    for lineno, line in body:
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != 1 + 3 * k:
            raise FormatError(
                f"{path}: line {lineno} has {len(cells) - 1} values, expected {3 * k} for {k} joints"
            )
        index_value = _to_float(cells[0], lineno, 1)
        if index_value != int(index_value) or index_value < 0:
            raise FormatError(f"{path}: line {lineno}: frame index must be a non-negative integer")
        index = int(index_value)
        if index in frames:
            raise FormatError(f"{path}: duplicate frame index {index}")
        values = np.array(
            [_to_float(c, lineno, col) for col, c in enumerate(cells[1:], start=2)]
        ).reshape(k, 3)
        conf = values[:, 2]
        bad = np.flatnonzero((conf < 0) | (conf > 1))
        if bad.size:
            raise ValidationError(
                f"{path}: line {lineno}: confidence {conf[bad[0]]} for joint {names[bad[0]]!r} outside [0, 1]"
            )
        frames[index] = KeypointFrame(index, values)

    order = sorted(frames)
    expected = set(range(order[0], order[-1] + 1))
    missing = sorted(expected.difference(frames))
    if missing:
        shown = ", ".join(map(str, missing[:20]))
        raise GapError(f"{path}: missing frame indices {shown}", missing=missing)
    return KeypointRecording(
        frames=tuple(frames[i] for i in order),
        fps=fps,
        joint_map={name: i for i, name in enumerate(names)},
        image_height_px=height,
    )


def write_keypoints(recording: KeypointRecording, path) -> None:
    lines = [
        f"#fps={_fmt(recording.fps)}",
        f"#image_height={recording.image_height_px}",
        f"#joints={','.join(recording.joint_names())}",
    ]
    for frame in recording.frames:
        cells = [str(frame.index)]
        cells.extend(_fmt(v) for v in frame.joints.ravel())
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# markers
# --------------------------------------------------------------------------


def _read_table(path, body):
    """Header row plus numeric rows; every row must match the header width."""
    if not body:
        raise FormatError(f"{path}: empty file")
    _, header_line = body[0]
    columns = [c.strip() for c in header_line.split(",")]
    if any(not c for c in columns):
        raise FormatError(f"{path}: empty column name in header")
    rows = []
    for lineno, line in body[1:]:
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != len(columns):
            raise FormatError(
                f"{path}: line {lineno} has {len(cells)} cells, header has {len(columns)} columns"
            )
        rows.append([_to_float(c, lineno, col) for col, c in enumerate(cells, start=1)])
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return columns, np.array(rows, dtype=float)


def parse_markers(path, vertical_axis: str = "z") -> MarkerRecording:
    header, body = _split_header(_read_lines(path))
    if "rate_hz" not in header:
        raise FormatError(f"{path}: missing #rate_hz= header")
    rate = _positive_rate(header["rate_hz"], "rate_hz")
    columns, table = _read_table(path, body)

    axes = {}
    for j, col in enumerate(columns):
        if col.lower() in ("time_s", "time"):
            continue
        stem, sep, axis = col.rpartition("_")
        if not sep or axis.lower() not in ("x", "y", "z"):
            raise FormatError(f"{path}: column {col!r} is not <marker>_x|y|z")
        slot = axes.setdefault(stem, {})
        if axis.lower() in slot:
            raise FormatError(f"{path}: duplicate column {col!r}")
        slot[axis.lower()] = j
    if not axes:
        raise FormatError(f"{path}: no marker columns")

    markers = {}
    for name, slot in axes.items():
        missing = [a for a in "xyz" if a not in slot]
        if missing:
            raise FormatError(f"{path}: marker {name!r} lacks {', '.join(name + '_' + a for a in missing)}")
        markers[name] = tuple(
            TimeSeries(table[:, slot[a]], rate, Unit.MILLIMETRES) for a in "xyz"
        )
    return MarkerRecording(markers=markers, rate_hz=rate, vertical_axis=vertical_axis)


def write_markers(recording: MarkerRecording, path) -> None:
    names = list(recording.markers)
    n = len(recording.markers[names[0]][0]) if names else 0
    lines = [f"#rate_hz={_fmt(recording.rate_hz)}"]
    lines.append(",".join(["time_s"] + [f"{m}_{a}" for m in names for a in "xyz"]))
    for i in range(n):
        cells = [_fmt(i / recording.rate_hz)]
        for m in names:
            cells.extend(_fmt(axis.samples[i]) for axis in recording.markers[m])
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# force
# --------------------------------------------------------------------------


def parse_force(path) -> ForceTrace:
    header, body = _split_header(_read_lines(path))
    declared = _positive_rate(header["rate_hz"], "rate_hz") if "rate_hz" in header else None
    columns, table = _read_table(path, body)
    lowered = [c.lower() for c in columns]

    if len(columns) == 2 and lowered[0] in ("time_s", "time"):
        time, fz = table[:, 0], table[:, 1]
        if len(time) >= 2:
            steps = np.diff(time)
            dt = (time[-1] - time[0]) / (len(time) - 1)
            if dt <= 0:
                raise FormatError(f"{path}: time column is not increasing")
            worst = np.max(np.abs(steps - dt))
            if worst > TIME_SPACING_TOL_S:
                raise FormatError(f"{path}: non-uniform sampling (step deviation {worst:.3g} s)")
            rate = 1.0 / dt
            if declared is not None:
                if abs(1.0 / declared - dt) > TIME_SPACING_TOL_S:
                    raise ValidationError(
                        f"{path}: declared rate {declared} Hz disagrees with time step {dt} s"
                    )
                rate = declared
        elif declared is None:
            raise FormatError(f"{path}: a single sample needs a #rate_hz= header")
        else:
            rate = declared
    elif len(columns) == 1:
        if declared is None:
            raise FormatError(f"{path}: single-column force file needs a #rate_hz= header")
        fz, rate = table[:, 0], declared
    else:
        raise FormatError(f"{path}: expected columns 'time_s,fz_n' or 'fz_n', got {columns}")
    return ForceTrace(TimeSeries(fz, rate, Unit.NEWTONS))


def write_force(trace: ForceTrace, path, with_time: bool = True) -> None:
    lines = [f"#rate_hz={_fmt(trace.rate_hz)}"]
    if with_time:
        lines.append("time_s,fz_n")
        lines.extend(f"{_fmt(i / trace.rate_hz)},{_fmt(v)}" for i, v in enumerate(trace.samples))
    else:
        lines.append("fz_n")
        lines.extend(_fmt(v) for v in trace.samples)
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SessionManifest:
    participant_id: str
    task: Task
    keypoints: Path | None = None
    markers: Path | None = None
    force: Path | None = None
    hip_joint: str = DEFAULT_HIP_JOINT
    toe_joint: str = DEFAULT_TOE_JOINT
    hip_marker: str = "hip"
    toe_marker: str = "toe"
    fps: float = 30.0
    omc_hz: float = 100.0
    fp_hz: float = 1000.0

    def __post_init__(self):
        for name in ("fps", "omc_hz", "fp_hz"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValidationError(f"manifest {name} must be positive, got {value}")

    def check_keypoint_bindings(self, recording: KeypointRecording) -> None:
        for name in (self.hip_joint, self.toe_joint):
            if name not in recording.joint_map:
                raise NameLookupError(f"joint {name!r} not in keypoint file joints")

    def check_marker_bindings(self, recording: MarkerRecording) -> None:
        for name in (self.hip_marker, self.toe_marker):
            if name not in recording.markers:
                raise NameLookupError(f"marker {name!r} not in marker file")


_PATH_KEYS = ("keypoints", "markers", "force")


def parse_manifest(path) -> SessionManifest:
    path = Path(path)
    values = {}
    for lineno, raw in enumerate(_read_lines(path), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}: line {lineno} is not key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lower()] = value

    known = {f.name for f in fields(SessionManifest)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise FormatError(f"{path}: unknown manifest keys {unknown}")
    for key in ("participant_id", "task"):
        if not values.get(key):
            raise FormatError(f"{path}: manifest needs {key}")

    kwargs = {"participant_id": values.pop("participant_id"), "task": Task.parse(values.pop("task"))}
    for key in _PATH_KEYS:
        value = values.pop(key, "")
        kwargs[key] = (path.parent / value) if value else None
    for key in ("fps", "omc_hz", "fp_hz"):
        if key in values:
            kwargs[key] = _positive_rate(values.pop(key), key)
    kwargs.update(values)
    return SessionManifest(**kwargs)


def write_manifest(manifest: SessionManifest, path) -> None:
    path = Path(path)
    lines = []
    for f in fields(SessionManifest):
        value = getattr(manifest, f.name)
        if f.name in _PATH_KEYS:
            value = "" if value is None else os.path.relpath(value, path.parent)
        elif isinstance(value, Task):
            value = value.value
        elif isinstance(value, float):
            value = _fmt(value)
        lines.append(f"{f.name}={value}")
    path.write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# vertical extraction
# --------------------------------------------------------------------------


class VerticalTrack(NamedTuple):
    series: TimeSeries
    confidence: TimeSeries | None = None


def extract_vertical(recording, name: str) -> VerticalTrack:
    """Vertical, up-positive track of one joint or marker.

    Keypoint rows are flipped about the image height and come with the
    parallel confidence series; marker tracks are the recording's vertical
    axis as-is.
    """
    if isinstance(recording, KeypointRecording):
        if name not in recording.joint_map:
            raise NameLookupError(f"unknown joint {name!r}")
        data = recording.as_array()[:, recording.joint_map[name], :]
        rows = TimeSeries(data[:, 1], recording.fps, Unit.PIXELS)
        conf = TimeSeries(data[:, 2], recording.fps, Unit.NORMALIZED)
        return VerticalTrack(flip_image_vertical(rows, recording.image_height_px), conf)
    if isinstance(recording, MarkerRecording):
        if name not in recording.markers:
            raise NameLookupError(f"unknown marker {name!r}")
        return VerticalTrack(recording.axis(name, recording.vertical_axis))
    raise TypeError(f"cannot extract a vertical track from {type(recording).__name__}")
