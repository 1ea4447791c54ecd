"""Session and study orchestration.

A session is one participant performing one task (bilateral or unilateral)
while keypoints, markers and force are recorded together. :func:`run_session`
turns its manifest into per-repetition heights for the four methods (FP, OMC,
RMM, PTM); :func:`run_study` pools sessions into the three summary tables
and Bland-Altman plot data.

Stage errors never abort a session: each (repetition, method) slot ends up
either measured or excluded with a reason.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .calibrate import ScaleCalibration, apply_ptm, fit_ptm_scale, mean_calibration, reverse_minmax
from .config import PipelineConfig
from .exceptions import JumpHeightError, ValidationError
from .forceplate import detect_flight_windows, height_from_flight_time
from .ingest import SessionManifest, extract_vertical, parse_force, parse_keypoints, parse_manifest, parse_markers
from .kinemetrics import (
    InputError,
    JumpMeasurement,
    bland_altman,
    icc_2_1,
    jump_height_from_displacement,
    test_retest_reliability,
)
from .model import JumpSegment, Method, RepetitionId, Source, Task
from .preprocess import (
    cut_like,
    denoise,
    detect_failure,
    fft_resample,
    savgol_smooth,
    segment_repetitions,
    zscore_despike,
)

logger = logging.getLogger(__name__)

METHODS = (Method.FP, Method.OMC, Method.RMM, Method.PTM)
# (markerless method, ground truth) in reporting order
METHOD_PAIRS = (
    (Method.RMM, Method.OMC),
    (Method.PTM, Method.OMC),
    (Method.RMM, Method.FP),
    (Method.PTM, Method.FP),
)
POOLED = "BL and UL"


@dataclass(frozen=True)
class Exclusion:
    participant: str
    task: Task
    rep: int | None
    method: Method
    reason: str


@dataclass(frozen=True)
class CalibrationRecord:
    rep: int
    r_mm_per_px: float
    free_fall_duration_s: float
    fallback: bool


@dataclass
class SessionResult:
    participant: str
    task: Task
    n_slots: int
    measurements: list = field(default_factory=list)
    exclusions: list = field(default_factory=list)
    calibrations: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    # rep -> PTM height in cm per (mm/px), awaiting a study-wide scale
    pending_ptm: dict = field(default_factory=dict)

    def valid_count(self, method: Method) -> int:
        return sum(1 for m in self.measurements if m.method is method)

    def to_dict(self) -> dict:
        return {
            "participant": self.participant,
            "task": self.task.value,
            "repetitions": self.n_slots,
            "measurements": [_measurement_dict(m) for m in self.measurements],
            "exclusions": [_exclusion_dict(e) for e in self.exclusions],
            "calibrations": [vars(c) for c in self.calibrations],
            "notes": list(self.notes),
        }


def _measurement_dict(m: JumpMeasurement) -> dict:
    rid = m.repetition_id
    return {
        "participant": rid.participant,
        "task": rid.task.value,
        "rep": rid.rep,
        "method": m.method.value,
        "height_cm": m.height_cm,
    }


def _exclusion_dict(e: Exclusion) -> dict:
    return {
        "participant": e.participant,
        "task": e.task.value,
        "rep": e.rep,
        "method": e.method.value,
        "reason": e.reason,
    }


def _reason(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


# --------------------------------------------------------------------------
# per-modality stages; each returns its per-repetition pieces or raises
# --------------------------------------------------------------------------


def _check_rate(declared: float, actual: float, what: str) -> None:
    if abs(declared - actual) > 1e-6 * max(declared, actual):
        raise ValidationError(f"{what}: manifest declares {declared} Hz, file has {actual} Hz")


def _force_heights(manifest: SessionManifest, cfg: PipelineConfig) -> list:
    if manifest.force is None:
        raise FileNotFoundError("no force file in manifest")
    trace = parse_force(manifest.force)
    _check_rate(manifest.fp_hz, trace.rate_hz, "force")
    windows = detect_flight_windows(trace, cfg.flight)
    return [height_from_flight_time(w.flight_time_s, cfg.constants) for w in windows]


def _marker_segments(manifest: SessionManifest, cfg: PipelineConfig) -> list:
    if manifest.markers is None:
        raise FileNotFoundError("no marker file in manifest")
    markers = parse_markers(manifest.markers)
    _check_rate(manifest.omc_hz, markers.rate_hz, "markers")
    manifest.check_marker_bindings(markers)
    hip = denoise(extract_vertical(markers, manifest.hip_marker).series, cfg.denoise)
    toe = denoise(extract_vertical(markers, manifest.toe_marker).series, cfg.denoise)
    segs = segment_repetitions(hip, cfg.segment, Source.OMC, manifest.participant_id, manifest.task)
    return [cut_like(toe, s) for s in segs]


@dataclass(frozen=True)
class _MarkerlessRep:
    hip_raw: JumpSegment  # despiked, unsmoothed; feeds gravity calibration
    toe: JumpSegment


def _keypoint_segments(manifest: SessionManifest, cfg: PipelineConfig) -> list:
    if manifest.keypoints is None:
        raise FileNotFoundError("no keypoint file in manifest")
    kp = parse_keypoints(manifest.keypoints)
    _check_rate(manifest.fps, kp.fps, "keypoints")
    manifest.check_keypoint_bindings(kp)
    fc = cfg.failure
    tracks = {}
    for name in (manifest.hip_joint, manifest.toe_joint):
        track, conf = extract_vertical(kp, name)
        verdict = detect_failure(
            track,
            conf,
            fc.min_conf,
            fc.max_speed_frac * kp.image_height_px,
            max_low_conf_fraction=fc.max_low_conf_fraction,
            denoise_cfg=cfg.denoise,
            segment_cfg=cfg.segment,
        )
        if not verdict:
            raise _FailureCase(f"failure case ({name}): {verdict.reason.value}: {verdict.detail}")
        tracks[name] = track
    hip_despiked = zscore_despike(tracks[manifest.hip_joint], cfg.denoise)
    hip = savgol_smooth(hip_despiked, cfg.denoise)
    toe = denoise(tracks[manifest.toe_joint], cfg.denoise)
    segs = segment_repetitions(hip, cfg.segment, Source.MMC, manifest.participant_id, manifest.task)
    return [_MarkerlessRep(cut_like(hip_despiked, s), cut_like(toe, s)) for s in segs]


class _FailureCase(JumpHeightError):
    pass


def _stage(fn, manifest, cfg):
    try:
        return fn(manifest, cfg), None
    except (JumpHeightError, OSError) as exc:
        return None, exc


# --------------------------------------------------------------------------
# session
# --------------------------------------------------------------------------


def _calibrate(mmc_reps, cfg: PipelineConfig, result: SessionResult, rep_ids):
    """Per-repetition scales with session-mean stand-ins; None where unavailable."""
    cc = cfg.calibration
    fitted = {}
    for k, rep in enumerate(mmc_reps, start=1):
        seg = rep.hip_raw
        try:
            fitted[k] = fit_ptm_scale(
                seg.displacement,
                seg.apex_index,
                cfg.constants,
                cc.fall_fraction,
                reading=cc.ptm_reading,
                source_segment=rep_ids[k],
            )
        except JumpHeightError as exc:
            result.notes.append(f"rep {k}: PTM calibration failed ({_reason(exc)}); using session mean")
    mean = mean_calibration(fitted.values()) if fitted else None
    chosen = {}
    for k in range(1, len(mmc_reps) + 1):
        if cc.ptm_scope == "session" or k not in fitted:
            chosen[k] = mean
        else:
            chosen[k] = fitted[k]
        if chosen[k] is not None:
            result.calibrations.append(
                CalibrationRecord(k, chosen[k].r_mm_per_px, chosen[k].free_fall_duration_s, k not in fitted)
            )
    return chosen


def run_session(manifest, config: PipelineConfig | None = None) -> SessionResult:
    """Process one participant/task session from its manifest (path or object)."""
    cfg = config or PipelineConfig()
    if not isinstance(manifest, SessionManifest):
        manifest = parse_manifest(manifest)
    pid, task = manifest.participant_id, manifest.task
    logger.info("session %s/%s", pid, task.value)

    fp, fp_err = _stage(_force_heights, manifest, cfg)
    omc, omc_err = _stage(_marker_segments, manifest, cfg)
    mmc, mmc_err = _stage(_keypoint_segments, manifest, cfg)

    counts = {"FP": len(fp or ()), "OMC": len(omc or ()), "MMC": len(mmc or ())}
    expected = cfg.segment.expected_reps
    n_slots = max([expected or 0, *counts.values()])
    result = SessionResult(pid, task, n_slots)
    for name, count in counts.items():
        if expected is not None and count not in (0, expected):
            result.notes.append(f"{name}: detected {count} repetitions, expected {expected}")

    rep_ids = {k: RepetitionId(pid, task, k) for k in range(1, n_slots + 1)}
    scales = _calibrate(mmc, cfg, result, rep_ids) if mmc else {}
    baseline = cfg.measure.baseline_fraction

    def measure(method, k, fn, modality_err):
        if modality_err is not None:
            result.exclusions.append(Exclusion(pid, task, k, method, _reason(modality_err)))
            return
        try:
            height = fn()
        except (JumpHeightError, IndexError, KeyError) as exc:
            reason = "repetition not detected" if isinstance(exc, (IndexError, KeyError)) else _reason(exc)
            result.exclusions.append(Exclusion(pid, task, k, method, reason))
            return
        result.measurements.append(JumpMeasurement(rep_ids[k], method, height))

    def rmm_height(k):
        toe_ref = omc[k - 1]
        toe = mmc[k - 1].toe
        up = fft_resample(toe.displacement, len(toe_ref))
        mm = reverse_minmax(up, toe_ref.displacement)
        return jump_height_from_displacement(JumpSegment(mm, int(np.argmax(mm.samples)), Source.MMC), baseline)

    def ptm_height(k, scale):
        toe = mmc[k - 1].toe
        mm = apply_ptm(toe.displacement, scale)
        return jump_height_from_displacement(JumpSegment(mm, toe.apex_index, Source.MMC), baseline)

    for k in range(1, n_slots + 1):
        measure(Method.FP, k, lambda: fp[k - 1], fp_err)
        measure(Method.OMC, k, lambda: jump_height_from_displacement(omc[k - 1], baseline), omc_err)
        measure(Method.RMM, k, lambda: rmm_height(k), mmc_err or omc_err)
        if mmc_err is None and k <= len(mmc) and scales.get(k) is None:
            try:
                result.pending_ptm[k] = ptm_height(k, ScaleCalibration(1.0, 1.0))
                reason = "no PTM calibration succeeded in session"
            except JumpHeightError as exc:
                reason = _reason(exc)
            result.exclusions.append(Exclusion(pid, task, k, Method.PTM, reason))
        else:
            measure(Method.PTM, k, lambda: ptm_height(k, scales[k]), mmc_err)
    return result


# --------------------------------------------------------------------------
# study
# --------------------------------------------------------------------------


@dataclass
class StudyReport:
    sessions: list
    measurements: pd.DataFrame
    exclusions: pd.DataFrame
    table1: pd.DataFrame
    table2: pd.DataFrame
    table3: pd.DataFrame
    ba_points: pd.DataFrame
    config: PipelineConfig
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def records(df):
            return json.loads(df.to_json(orient="records"))

        return {
            "tool": "jumpheight",
            "version": __version__,
            "config": self.config.to_dict(),
            "statistics": {
                "bland_altman_sd": "sample (n-1)",
                "icc": "ICC(2,1) two-way random, absolute agreement, single measurement",
                "bias": "ground truth minus markerless",
                "table1_sd": "population (n)",
            },
            "sessions": [s.to_dict() for s in self.sessions],
            "table1": records(self.table1),
            "table2": records(self.table2),
            "table3": records(self.table3),
            "notes": list(self.notes),
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.table1.to_csv(out / "table1.csv", index=False)
        self.table2.to_csv(out / "table2.csv", index=False)
        self.table3.to_csv(out / "table3.csv", index=False)
        self.ba_points.to_csv(out / "ba_points.csv", index=False)
        self.measurements.to_csv(out / "measurements.csv", index=False)
        self.exclusions.to_csv(out / "exclusions.csv", index=False)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return out


def _resolve_pending_ptm(sessions, notes):
    fitted = [c.r_mm_per_px for s in sessions for c in s.calibrations if not c.fallback]
    if not fitted:
        return
    study_r = float(np.mean(fitted))
    for s in sessions:
        for k, per_r in sorted(s.pending_ptm.items()):
            s.exclusions = [
                e for e in s.exclusions if not (e.rep == k and e.method is Method.PTM)
            ]
            s.measurements.append(JumpMeasurement(RepetitionId(s.participant, s.task, k), Method.PTM, per_r * study_r))
            s.calibrations.append(CalibrationRecord(k, study_r, float("nan"), True))
        if s.pending_ptm:
            notes.append(f"{s.participant}/{s.task.value}: PTM used study-mean scale {study_r:.4f} mm/px")
            s.pending_ptm = {}


def _measurement_frame(sessions) -> pd.DataFrame:
    rows = [_measurement_dict(m) for s in sessions for m in s.measurements]
    df = pd.DataFrame(rows, columns=["participant", "task", "rep", "method", "height_cm"])
    return df.sort_values(["participant", "task", "rep", "method"], kind="stable").reset_index(drop=True)


def _exclusion_frame(sessions) -> pd.DataFrame:
    rows = [_exclusion_dict(e) for s in sessions for e in s.exclusions]
    return pd.DataFrame(rows, columns=["participant", "task", "rep", "method", "reason"])


def _table1(df: pd.DataFrame) -> pd.DataFrame:
    cols = [f"{t}_{m.value}" for t in ("BL", "UL") for m in METHODS]
    participants = sorted(df["participant"].unique()) if len(df) else []
    table = pd.DataFrame(index=participants, columns=cols, dtype=float)
    for (pid, task, method), grp in df.groupby(["participant", "task", "method"]):
        tag = "BL" if task == Task.BILATERAL.value else "UL"
        table.loc[pid, f"{tag}_{method}"] = grp["height_cm"].mean()
    table.loc["Mean"] = table.mean(skipna=True)
    table.loc["SD"] = table.iloc[:-1].std(ddof=0, skipna=True)
    table.index.name = "participant"
    return table.reset_index()


def _task_groups():
    return (
        (Task.BILATERAL.value, (Task.BILATERAL.value,)),
        (Task.UNILATERAL.value, (Task.UNILATERAL.value,)),
        (POOLED, (Task.BILATERAL.value, Task.UNILATERAL.value)),
    )


def _table2(df: pd.DataFrame) -> pd.DataFrame:
    rows = []
    for method in METHODS:
        row = {"method": method.value}
        for task in (Task.BILATERAL.value, Task.UNILATERAL.value):
            sub = df[(df["method"] == method.value) & (df["task"] == task)]
            value = None
            if len(sub):
                wide = sub.pivot_table(index="participant", columns="rep", values="height_cm")
                try:
                    value = test_retest_reliability(wide.to_numpy())
                except (InputError, ValueError):
                    value = None
            row[task] = value
        rows.append(row)
    return pd.DataFrame(rows, columns=["method", Task.BILATERAL.value, Task.UNILATERAL.value])


def _paired(df: pd.DataFrame, tasks, mmc: Method, truth: Method, pooling: str) -> pd.DataFrame:
    sub = df[df["task"].isin(tasks)]
    keys = ["participant", "task", "rep"]
    if pooling == "participant_mean":
        sub = sub.groupby(["participant", "task", "method"], as_index=False)["height_cm"].mean()
        sub["rep"] = 0
    a = sub[sub["method"] == truth.value][keys + ["height_cm"]].rename(columns={"height_cm": "truth"})
    b = sub[sub["method"] == mmc.value][keys + ["height_cm"]].rename(columns={"height_cm": "mmc"})
    return a.merge(b, on=keys).sort_values(keys, kind="stable").reset_index(drop=True)


def _table3_and_points(df: pd.DataFrame, pooling: str):
    rows, points = [], []
    for group, tasks in _task_groups():
        for mmc, truth in METHOD_PAIRS:
            pairs = _paired(df, tasks, mmc, truth, pooling)
            row = {"group": group, "method": mmc.value, "ground_truth": truth.value, "n": len(pairs)}
            if len(pairs) < 2:
                row.update(computable=False, note="fewer than 2 paired measurements")
                rows.append(row)
                continue
            try:
                icc = icc_2_1(pairs[["truth", "mmc"]].to_numpy(), (truth, mmc))
                icc_value = icc.icc_2_1
            except InputError:
                icc_value = None
            ba = bland_altman(pairs["truth"].to_numpy(), pairs["mmc"].to_numpy())
            row.update(
                computable=True,
                icc_2_1=icc_value,
                negative_icc=bool(icc_value is not None and icc_value < 0),
                bias_cm=ba.bias_cm,
                sd_cm=ba.sd_cm,
                loa_low_cm=ba.loa_low_cm,
                loa_high_cm=ba.loa_high_cm,
                note="",
            )
            rows.append(row)
            for rec in pairs.itertuples(index=False):
                points.append(
                    {
                        "group": group,
                        "method": mmc.value,
                        "ground_truth": truth.value,
                        "participant": rec.participant,
                        "task": rec.task,
                        "rep": rec.rep,
                        "truth_cm": rec.truth,
                        "mmc_cm": rec.mmc,
                        "mean_cm": (rec.truth + rec.mmc) / 2.0,
                        "diff_cm": rec.truth - rec.mmc,
                        "bias_cm": ba.bias_cm,
                        "loa_low_cm": ba.loa_low_cm,
                        "loa_high_cm": ba.loa_high_cm,
                    }
                )
    columns = [
        "group", "method", "ground_truth", "n", "computable", "icc_2_1", "negative_icc",
        "bias_cm", "sd_cm", "loa_low_cm", "loa_high_cm", "note",
    ]
    point_cols = [
        "group", "method", "ground_truth", "participant", "task", "rep", "truth_cm", "mmc_cm",
        "mean_cm", "diff_cm", "bias_cm", "loa_low_cm", "loa_high_cm",
    ]
    return pd.DataFrame(rows, columns=columns), pd.DataFrame(points, columns=point_cols)


def summarize(sessions, config: PipelineConfig | None = None, notes=None) -> StudyReport:
    """Build the study tables from already-processed sessions."""
    cfg = config or PipelineConfig()
    notes = list(notes or [])
    _resolve_pending_ptm(sessions, notes)
    df = _measurement_frame(sessions)
    table3, points = _table3_and_points(df, cfg.measure.pooling)
    return StudyReport(
        sessions=list(sessions),
        measurements=df,
        exclusions=_exclusion_frame(sessions),
        table1=_table1(df),
        table2=_table2(df),
        table3=table3,
        ba_points=points,
        config=cfg,
        notes=notes,
    )


def run_study(manifests, config: PipelineConfig | None = None, max_workers: int | None = None) -> StudyReport:
    """Process sessions concurrently, then aggregate in manifest order."""
    cfg = config or PipelineConfig()
    manifests = list(manifests)
    if not manifests:
        raise ValueError("run_study needs at least one session manifest")
    notes = []
    sessions = []
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(run_session, m, cfg) for m in manifests]
        for manifest, fut in zip(manifests, futures):
            try:
                sessions.append(fut.result())
            except (JumpHeightError, OSError) as exc:
                notes.append(f"{manifest}: session skipped ({_reason(exc)})")
    if not sessions:
        raise ValueError("no session could be processed: " + "; ".join(notes))
    return summarize(sessions, cfg, notes)
