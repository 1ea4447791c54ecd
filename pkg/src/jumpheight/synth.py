"""Synthetic countermovement-jump sessions with known ground truth.

The centre of mass (tracked as the hip) follows, per repetition:

1. quiet stance,
2. a half-cosine countermovement dip of ``countermovement_depth_cm``,
3. constant-acceleration propulsion up to toe-off, reaching the take-off
   speed ``sqrt(2 g h)`` at ``toe_off_extension_cm`` above stance,
4. an exact ballistic flight ``d(t) = d0 + v0 t - g t^2 / 2``,
5. critically damped settling back to stance after landing.

The fifth-metatarsal (toe) point stays on the floor except in flight, where
it moves rigidly with the hip, so its apex height is exactly ``h``. Force is
``m (g + a(t))`` while in contact and zero in flight. Keypoints are projected
to an image with a top-left origin at ``scale_mm_per_px``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import ValidationError
from .ingest import (
    DEFAULT_HIP_JOINT,
    DEFAULT_TOE_JOINT,
    SessionManifest,
    write_force,
    write_keypoints,
    write_manifest,
    write_markers,
)
from .model import (
    DEFAULT_CONSTANTS,
    Constants,
    ForceTrace,
    KeypointFrame,
    KeypointRecording,
    MarkerRecording,
    Task,
    TimeSeries,
    Unit,
)

HIP_STANCE_MM = 950.0
TOE_FLOOR_MM = 20.0
GROUND_ROW_UP_PX = 40.0  # floor line, in up-positive pixels
LEAD_IN_S = 1.5
SETTLE_S = 2.0
TAIL_S = 1.5
LANDING_STIFFNESS = 10.0  # rad/s, critically damped settling
MAX_DIP_DECEL_G = 0.5


@dataclass(frozen=True)
class SynthJumpSpec:
    true_height_cm: float = 20.0
    reps: int = 3
    scale_mm_per_px: float = 3.5
    fps: float = 30.0
    fp_rate_hz: float = 1000.0
    noise_px_sd: float = 0.0
    noise_n_sd: float = 0.0
    stance_force_n: float = 700.0
    countermovement_depth_cm: float = 15.0
    seed: int = 0
    omc_rate_hz: float = 100.0
    noise_mm_sd: float = 0.0
    toe_off_extension_cm: float = 5.0
    image_height_px: int = 720
    spikes_per_joint: int = 0
    spike_px: float = 80.0
    participant_id: str = "S01"
    task: Task = Task.BILATERAL
    # per-repetition heights override true_height_cm when given
    rep_heights_cm: tuple | None = None
    constants: Constants = field(default=DEFAULT_CONSTANTS)

    def __post_init__(self):
        positives = ("true_height_cm", "scale_mm_per_px", "fps", "fp_rate_hz", "stance_force_n", "omc_rate_hz")
        for name in positives:
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        for name in ("noise_px_sd", "noise_n_sd", "noise_mm_sd", "countermovement_depth_cm", "toe_off_extension_cm"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        if self.reps < 1:
            raise ValidationError("reps must be >= 1")
        if self.countermovement_depth_cm + self.toe_off_extension_cm <= 0:
            raise ValidationError("countermovement depth plus toe-off extension must be positive")
        if self.rep_heights_cm is not None:
            if len(self.rep_heights_cm) != self.reps or min(self.rep_heights_cm) <= 0:
                raise ValidationError("rep_heights_cm needs one positive height per repetition")
        object.__setattr__(self, "task", Task(self.task))

    def heights_cm(self) -> tuple:
        if self.rep_heights_cm is not None:
            return tuple(float(h) for h in self.rep_heights_cm)
        return (float(self.true_height_cm),) * self.reps


@dataclass(frozen=True)
class RepTruth:
    rep: int
    height_cm: float
    movement_start_s: float
    toe_off_s: float
    apex_s: float
    landing_s: float

    @property
    def flight_time_s(self) -> float:
        return self.landing_s - self.toe_off_s


@dataclass(frozen=True)
class GroundTruth:
    reps: tuple
    scale_mm_per_px: float
    duration_s: float

    def as_dict(self) -> dict:
        out = asdict(self)
        for rep, src in zip(out["reps"], self.reps):
            rep["flight_time_s"] = src.flight_time_s
        return out


@dataclass(frozen=True)
class SynthSession:
    spec: SynthJumpSpec
    keypoints: KeypointRecording
    markers: MarkerRecording
    force: ForceTrace
    truth: GroundTruth


class _Rep:
    """Closed-form kinematics of one repetition (metres, seconds, relative to stance)."""

    def __init__(self, start, height_m, depth_m, ext_m, g):
        self.g = g
        self.depth = depth_m
        self.ext = ext_m
        self.v_to = math.sqrt(2.0 * g * height_m)
        if depth_m > 0:
            self.dip_s = max(0.3, math.pi * math.sqrt(depth_m / (2.0 * MAX_DIP_DECEL_G * g)))
        else:
            self.dip_s = 0.0
        self.push_acc = self.v_to**2 / (2.0 * (depth_m + ext_m))
        self.push_s = self.v_to / self.push_acc
        self.flight_s = 2.0 * self.v_to / g
        self.start = start
        self.bottom = start + self.dip_s
        self.toe_off = self.bottom + self.push_s
        self.landing = self.toe_off + self.flight_s
        self.apex = self.toe_off + self.flight_s / 2.0

    def evaluate(self, t):
        """Position, acceleration and contact flag for times ``t >= start``."""
        y = np.zeros_like(t)
        acc = np.zeros_like(t)
        contact = np.ones_like(t, dtype=bool)

        m = (t >= self.start) & (t < self.bottom)
        if self.dip_s > 0:
            w = math.pi / self.dip_s
            tau = t[m] - self.start
            y[m] = -self.depth * (1.0 - np.cos(w * tau)) / 2.0
            acc[m] = -self.depth * w**2 * np.cos(w * tau) / 2.0

        m = (t >= self.bottom) & (t < self.toe_off)
        tau = t[m] - self.bottom
        y[m] = -self.depth + 0.5 * self.push_acc * tau**2
        acc[m] = self.push_acc

        m = (t >= self.toe_off) & (t < self.landing)
        tau = t[m] - self.toe_off
        y[m] = self.ext + self.v_to * tau - 0.5 * self.g * tau**2
        acc[m] = -self.g
        contact[m] = False

        m = t >= self.landing
        tau = t[m] - self.landing
        w = LANDING_STIFFNESS
        a0 = self.ext
        b0 = w * a0 - self.v_to
        decay = np.exp(-w * tau)
        y[m] = (a0 + b0 * tau) * decay
        acc[m] = (-2.0 * w * b0 + w**2 * (a0 + b0 * tau)) * decay
        return y, acc, contact

    def toe_lift(self, t):
        """Toe height above the floor in metres."""
        lift = np.zeros_like(t)
        m = (t >= self.toe_off) & (t < self.landing)
        tau = t[m] - self.toe_off
        lift[m] = self.v_to * tau - 0.5 * self.g * tau**2
        return lift


def _build_reps(spec: SynthJumpSpec):
    g = spec.constants.g
    reps = []
    start = LEAD_IN_S
    for h_cm in spec.heights_cm():
        rep = _Rep(start, h_cm / 100.0, spec.countermovement_depth_cm / 100.0, spec.toe_off_extension_cm / 100.0, g)
        reps.append(rep)
        start = rep.landing + SETTLE_S
    duration = reps[-1].landing + TAIL_S
    return reps, duration


def _kinematics(reps, t):
    """Hip displacement (m), acceleration (m/s^2), contact flags and toe lift (m)."""
    y = np.zeros_like(t)
    acc = np.zeros_like(t)
    contact = np.ones_like(t, dtype=bool)
    lift = np.zeros_like(t)
    bounds = [r.start for r in reps[1:]] + [np.inf]
    for rep, end in zip(reps, bounds):
        m = (t >= rep.start) & (t < end)
        ry, racc, rc = rep.evaluate(t[m])
        y[m], acc[m], contact[m] = ry, racc, rc
        lift[m] = rep.toe_lift(t[m])
    return y, acc, contact, lift


def _sample_times(rate, duration):
    return np.arange(int(math.floor(duration * rate)) + 1) / rate


def _inject_spikes(rng, values, count, size):
    if count <= 0:
        return values
    idx = rng.choice(values.shape[0], size=min(count, values.shape[0]), replace=False)
    values = values.copy()
    values[idx] += size * rng.choice([-1.0, 1.0], size=idx.size)
    return values


def generate(spec: SynthJumpSpec = SynthJumpSpec()) -> SynthSession:
    """Build keypoint, marker and force recordings plus their ground truth.

    Deterministic for a given spec (including ``seed``).
    """
    rng = np.random.default_rng(spec.seed)
    reps, duration = _build_reps(spec)
    g = spec.constants.g

    # markers (mm)
    t_omc = _sample_times(spec.omc_rate_hz, duration)
    y, _, _, lift = _kinematics(reps, t_omc)
    n = t_omc.size
    hip_z = HIP_STANCE_MM + 1000.0 * y + rng.normal(0.0, spec.noise_mm_sd, n)
    toe_z = TOE_FLOOR_MM + 1000.0 * lift + rng.normal(0.0, spec.noise_mm_sd, n)
    markers = MarkerRecording(
        markers={
            "hip": (
                TimeSeries(np.full(n, 120.0), spec.omc_rate_hz, Unit.MILLIMETRES),
                TimeSeries(np.full(n, 80.0), spec.omc_rate_hz, Unit.MILLIMETRES),
                TimeSeries(hip_z, spec.omc_rate_hz, Unit.MILLIMETRES),
            ),
            "toe": (
                TimeSeries(np.full(n, 210.0), spec.omc_rate_hz, Unit.MILLIMETRES),
                TimeSeries(np.full(n, 60.0), spec.omc_rate_hz, Unit.MILLIMETRES),
                TimeSeries(toe_z, spec.omc_rate_hz, Unit.MILLIMETRES),
            ),
        },
        rate_hz=spec.omc_rate_hz,
    )

    # force (N)
    t_fp = _sample_times(spec.fp_rate_hz, duration)
    _, acc, contact, _ = _kinematics(reps, t_fp)
    mass = spec.stance_force_n / g
    force = np.where(contact, mass * (g + acc), 0.0)
    if spec.noise_n_sd > 0:
        force = force + rng.normal(0.0, spec.noise_n_sd, t_fp.size)
    trace = ForceTrace(TimeSeries(force, spec.fp_rate_hz, Unit.NEWTONS))

    # keypoints (px, image rows grow downward)
    t_cam = _sample_times(spec.fps, duration)
    y, _, _, lift = _kinematics(reps, t_cam)
    m = t_cam.size
    height = spec.image_height_px
    hip_up = GROUND_ROW_UP_PX + (HIP_STANCE_MM + 1000.0 * y) / spec.scale_mm_per_px
    toe_up = GROUND_ROW_UP_PX + (TOE_FLOOR_MM + 1000.0 * lift) / spec.scale_mm_per_px
    columns = []
    for x0, up in ((600.0, hip_up), (640.0, toe_up)):
        xs = np.full(m, x0)
        rows = height - up
        if spec.noise_px_sd > 0:
            xs = xs + rng.normal(0.0, spec.noise_px_sd, m)
            rows = rows + rng.normal(0.0, spec.noise_px_sd, m)
        rows = _inject_spikes(rng, rows, spec.spikes_per_joint, spec.spike_px)
        conf = np.round(rng.uniform(0.8, 0.95, m), 3)
        columns.append(np.column_stack([xs, rows, conf]))
    joints = np.stack(columns, axis=1)
    keypoints = KeypointRecording(
        frames=tuple(KeypointFrame(i, joints[i]) for i in range(m)),
        fps=spec.fps,
        joint_map={DEFAULT_HIP_JOINT: 0, DEFAULT_TOE_JOINT: 1},
        image_height_px=height,
    )

    truth = GroundTruth(
        reps=tuple(
            RepTruth(k, h, r.start, r.toe_off, r.apex, r.landing)
            for k, (h, r) in enumerate(zip(spec.heights_cm(), reps), start=1)
        ),
        scale_mm_per_px=spec.scale_mm_per_px,
        duration_s=duration,
    )
    return SynthSession(spec, keypoints, markers, trace, truth)


def write_session(session: SynthSession, out_dir, stem: str | None = None) -> Path:
    """Write the three recordings and a manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = session.spec
    stem = stem or f"{spec.participant_id}_{'BL' if spec.task is Task.BILATERAL else 'UL'}"
    kp = out / f"{stem}_keypoints.txt"
    mk = out / f"{stem}_markers.csv"
    fp = out / f"{stem}_force.csv"
    write_keypoints(session.keypoints, kp)
    write_markers(session.markers, mk)
    write_force(session.force, fp)
    manifest = SessionManifest(
        participant_id=spec.participant_id,
        task=spec.task,
        keypoints=kp,
        markers=mk,
        force=fp,
        fps=spec.fps,
        omc_hz=spec.omc_rate_hz,
        fp_hz=spec.fp_rate_hz,
    )
    path = out / f"{stem}_manifest.txt"
    write_manifest(manifest, path)
    return path
