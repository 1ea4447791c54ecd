import json

import numpy as np
import pandas as pd
import pytest

import jumpheight.pipeline as pipeline
from jumpheight.config import PipelineConfig, config_from_dict
from jumpheight.exceptions import CalibrationError
from jumpheight.ingest import parse_manifest, write_keypoints
from jumpheight.model import KeypointFrame, KeypointRecording, Method, Task
from jumpheight.pipeline import run_session, run_study, summarize
from jumpheight.synth import SynthJumpSpec, generate, write_session

TOL = {Method.FP: 0.2, Method.OMC: 0.2, Method.RMM: 0.2, Method.PTM: 0.3}


def heights(result, method):
    return {m.repetition_id.rep: m.height_cm for m in result.measurements if m.method is method}


def assert_accounted(result):
    slots = {(m.repetition_id.rep, m.method) for m in result.measurements}
    slots |= {(e.rep, e.method) for e in result.exclusions}
    assert len(result.measurements) + len(result.exclusions) == result.n_slots * 4
    assert len(slots) == result.n_slots * 4
    assert all(e.reason for e in result.exclusions)


def test_noiseless_session_recovers_truth(clean_manifest):
    result = run_session(clean_manifest)
    assert result.n_slots == 3 and not result.exclusions
    for method, tol in TOL.items():
        got = heights(result, method)
        assert sorted(got) == [1, 2, 3]
        assert all(abs(h - 20.0) <= tol for h in got.values()), (method, got)
    assert_accounted(result)


def test_missing_force_file_keeps_other_modalities(tmp_path, clean_session):
    manifest = write_session(clean_session, tmp_path)
    text = manifest.read_text()
    manifest.write_text("\n".join(l if not l.startswith("force=") else "force=" for l in text.splitlines()))
    result = run_session(manifest)
    assert heights(result, Method.FP) == {}
    assert len(heights(result, Method.OMC)) == 3 and len(heights(result, Method.PTM)) == 3
    assert {e.method for e in result.exclusions} == {Method.FP}
    assert_accounted(result)


def test_all_invalid_keypoints_excluded_with_reasons(tmp_path, clean_session):
    manifest = write_session(clean_session, tmp_path)
    rec = clean_session.keypoints
    frames = tuple(
        KeypointFrame(f.index, np.c_[f.joints[:, :2], np.full(rec.n_joints, 0.1)]) for f in rec.frames
    )
    write_keypoints(
        KeypointRecording(frames, rec.fps, dict(rec.joint_map), rec.image_height_px),
        parse_manifest(manifest).keypoints,
    )
    result = run_session(manifest)
    assert heights(result, Method.RMM) == {} and heights(result, Method.PTM) == {}
    reasons = [e.reason for e in result.exclusions if e.method in (Method.RMM, Method.PTM)]
    assert len(reasons) == 6 and all("low-confidence" in r for r in reasons)
    assert len(heights(result, Method.FP)) == 3
    assert_accounted(result)


def test_unreadable_keypoints_become_exclusions(tmp_path, clean_session):
    manifest = write_session(clean_session, tmp_path)
    parse_manifest(manifest).keypoints.write_text("garbage\n")
    result = run_session(manifest)
    assert len(heights(result, Method.OMC)) == 3
    assert all("FormatError" in e.reason for e in result.exclusions)
    assert_accounted(result)


def test_failed_calibration_uses_session_mean(monkeypatch, clean_manifest):
    real = pipeline.fit_ptm_scale

    def flaky(*args, source_segment=None, **kwargs):
        if source_segment.rep == 2:
            raise CalibrationError("forced")
        return real(*args, source_segment=source_segment, **kwargs)

    monkeypatch.setattr(pipeline, "fit_ptm_scale", flaky)
    result = run_session(clean_manifest)
    cals = {c.rep: c for c in result.calibrations}
    assert cals[2].fallback and not cals[1].fallback
    assert cals[2].r_mm_per_px == pytest.approx((cals[1].r_mm_per_px + cals[3].r_mm_per_px) / 2)
    assert len(heights(result, Method.PTM)) == 3
    assert any("rep 2" in n for n in result.notes)


def test_session_without_calibration_uses_study_mean(monkeypatch, tmp_path):
    real = pipeline.fit_ptm_scale
    a = write_session(generate(SynthJumpSpec(participant_id="A")), tmp_path)
    b = write_session(generate(SynthJumpSpec(participant_id="B", true_height_cm=25.0)), tmp_path)

    def only_a(*args, source_segment=None, **kwargs):
        if source_segment.participant == "B":
            raise CalibrationError("forced")
        return real(*args, source_segment=source_segment, **kwargs)

    monkeypatch.setattr(pipeline, "fit_ptm_scale", only_a)
    report = run_study([a, b])
    b_ptm = report.measurements.query("participant == 'B' and method == 'PTM'")
    assert len(b_ptm) == 3
    assert np.all(np.abs(b_ptm["height_cm"] - 25.0) < 0.3)
    assert report.exclusions.empty
    assert any("study-mean" in n for n in report.notes)


def test_session_scope_uses_one_scale(clean_manifest):
    cfg = config_from_dict({"ptm_scope": "session"})
    rs = {c.r_mm_per_px for c in run_session(clean_manifest, cfg).calibrations}
    assert len(rs) == 1


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    out = tmp_path_factory.mktemp("study")
    rng = np.random.default_rng(5)
    manifests = []
    for i in range(16):
        for task, base in ((Task.BILATERAL, 22.0), (Task.UNILATERAL, 15.0)):
            spec = SynthJumpSpec(
                participant_id=f"P{i + 1:02d}",
                task=task,
                rep_heights_cm=tuple(base + rng.normal(0, 2.0) + rng.normal(0, 0.5, 3)),
                scale_mm_per_px=float(rng.uniform(3.0, 4.0)),
                noise_px_sd=1.0,
                noise_n_sd=1.0,
                seed=i,
            )
            manifests.append(write_session(generate(spec), out))
    return manifests


def test_study_tables_populated(study, tmp_path):
    report = run_study(study, max_workers=4)
    assert len(report.sessions) == 32
    assert len(report.table1) == 18 and report.table1.iloc[:16].notna().all().all()
    assert report.table2.set_index("method").notna().all().all()
    t3 = report.table3
    assert list(t3["group"].unique()) == ["Bilateral", "Unilateral", "BL and UL"]
    assert t3["computable"].all() and t3["icc_2_1"].gt(0.8).all()
    assert set(t3["n"]) == {48, 96}
    assert len(report.ba_points) == t3["n"].sum()
    out = report.write(tmp_path)
    for name in ("table1.csv", "table2.csv", "table3.csv", "ba_points.csv", "report.json", "exclusions.csv"):
        assert (out / name).exists()
    doc = json.loads((out / "report.json").read_text())
    assert doc["config"]["fall_fraction"] == 0.4 and doc["version"]


def test_study_table1_sd_is_population(study):
    report = run_study(study[:6])
    t1 = report.table1.set_index("participant")
    col = t1.loc[["P01", "P02", "P03"], "BL_FP"]
    assert t1.loc["SD", "BL_FP"] == pytest.approx(col.std(ddof=0))
    assert t1.loc["Mean", "BL_FP"] == pytest.approx(col.mean())


def test_study_report_is_deterministic(study, tmp_path):
    a = run_study(study[:6], max_workers=1).write(tmp_path / "a")
    b = run_study(study[:6], max_workers=6).write(tmp_path / "b")
    for name in ("report.json", "table1.csv", "table3.csv", "ba_points.csv", "measurements.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_single_participant_trr_not_computable(clean_manifest):
    report = run_study([clean_manifest])
    assert report.table2["Bilateral"].isna().all()
    t3 = report.table3.set_index(["group", "method", "ground_truth"])
    assert not t3.loc[("Unilateral", "RMM", "OMC"), "computable"]


def test_participant_mean_pooling(study):
    cfg = config_from_dict({"pooling": "participant_mean"})
    t3 = run_study(study[:8], cfg).table3
    assert set(t3["n"]) == {4, 8}


def test_bias_direction_is_truth_minus_markerless(study):
    report = run_study(study[:4])
    df = report.measurements.pivot_table(index=["participant", "task", "rep"], columns="method", values="height_cm")
    row = report.table3.query("group == 'BL and UL' and method == 'RMM' and ground_truth == 'FP'").iloc[0]
    assert row["bias_cm"] == pytest.approx((df["FP"] - df["RMM"]).mean(), abs=1e-12)


def test_empty_study_rejected():
    with pytest.raises(ValueError):
        run_study([])


def test_summarize_replays_reference_means():
    """Per-participant means fed straight into the comparison stage."""
    from jumpheight.kinemetrics import JumpMeasurement
    from jumpheight.model import RepetitionId
    from jumpheight.pipeline import SessionResult

    sessions = []
    for i, (fp, rmm) in enumerate([(20.0, 21.0), (30.0, 31.5), (25.0, 26.0)]):
        s = SessionResult(f"P{i}", Task.BILATERAL, 1)
        rid = RepetitionId(f"P{i}", Task.BILATERAL, 1)
        s.measurements += [JumpMeasurement(rid, Method.FP, fp), JumpMeasurement(rid, Method.RMM, rmm)]
        sessions.append(s)
    t3 = summarize(sessions, PipelineConfig()).table3
    row = t3.query("group == 'Bilateral' and method == 'RMM' and ground_truth == 'FP'").iloc[0]
    assert row["bias_cm"] == pytest.approx(-7 / 6)


def test_study_with_no_readable_session(tmp_path):
    bad = tmp_path / "bad_manifest.txt"
    bad.write_text("participant_id=P1\n")
    with pytest.raises(ValueError):
        run_study([bad])


def test_unreadable_session_is_skipped_with_note(tmp_path, clean_manifest):
    bad = tmp_path / "bad_manifest.txt"
    bad.write_text("participant_id=P1\n")
    report = run_study([clean_manifest, bad])
    assert len(report.sessions) == 1 and "skipped" in report.notes[0]
