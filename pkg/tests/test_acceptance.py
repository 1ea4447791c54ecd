"""Acceptance criteria, one test each.

Every test prints ``criterion N: PASS|FAIL | detail`` and the lines are
repeated in the "acceptance criteria" section of the terminal summary. Run
with ``pytest tests/test_acceptance.py -v -s``.
"""

from fractions import Fraction

import numpy as np
import pytest

from conftest import record_criterion
from jumpheight.forceplate import height_from_flight_time
from jumpheight.ingest import extract_vertical
from jumpheight.kinemetrics import bland_altman, icc_2_1
from jumpheight.model import Constants, Method, TimeSeries, Unit
from jumpheight.pipeline import run_session
from jumpheight.preprocess import (
    DenoiseConfig,
    denoise,
    savgol_smooth,
    segment_repetitions,
    zscore_despike,
    zscore_spike_mask,
)
from jumpheight.synth import SynthJumpSpec, generate, write_session

# Reference per-participant bilateral means (cm), P01..P16, each the mean of
# three repetitions.
BILATERAL = {
    Method.FP: [23.81, 11.81, 16.46, 18.19, 15.79, 15.88, 11.73, 13.70,
                18.71, 18.50, 28.99, 15.15, 26.93, 33.96, 45.22, 26.22],
    Method.OMC: [26.95, 12.58, 18.49, 21.54, 16.15, 17.64, 13.10, 15.63,
                 25.45, 20.24, 32.09, 20.99, 28.96, 37.99, 55.65, 26.50],
    Method.RMM: [26.37, 10.96, 17.51, 20.52, 15.48, 16.76, 11.50, 12.80,
                 24.19, 19.49, 30.03, 17.98, 26.90, 36.68, 54.51, 24.82],
    Method.PTM: [27.91, 12.43, 18.86, 21.54, 17.37, 19.35, 13.79, 12.99,
                 24.01, 20.62, 31.39, 18.10, 26.47, 35.99, 50.94, 21.12],
}

# (ground truth, markerless method) -> reference bias (cm) and ICC(2,1)
REFERENCE = {
    (Method.FP, Method.RMM): (-1.59, 0.95),
    (Method.FP, Method.PTM): (-1.99, 0.93),
    (Method.OMC, Method.RMM): (1.47, 0.99),
    (Method.OMC, Method.PTM): (1.07, 0.97),
}


def test_criterion_1_bias_from_reference_means():
    worst, parts = 0.0, []
    for (truth, mmc), (bias, _) in REFERENCE.items():
        got = bland_altman(BILATERAL[truth], BILATERAL[mmc]).bias_cm
        worst = max(worst, abs(got - bias))
        parts.append(f"{truth.value}-{mmc.value} {got:+.3f} (want {bias:+.2f})")
    ok = worst <= 0.03
    record_criterion(1, ok, f"{'; '.join(parts)}; max |err| {worst:.4f} cm, tol 0.03")
    assert ok


def test_criterion_2_icc_from_reference_means():
    worst, parts = 0.0, []
    for (truth, mmc), (_, icc) in REFERENCE.items():
        got = icc_2_1(np.column_stack([BILATERAL[truth], BILATERAL[mmc]])).icc_2_1
        worst = max(worst, abs(got - icc))
        parts.append(f"{truth.value}/{mmc.value} {got:.3f} (want {icc:.2f})")
    ok = worst <= 0.05
    record_criterion(2, ok, f"{'; '.join(parts)}; max |err| {worst:.3f}, tol 0.05")
    assert ok


def anova_icc_oracle(y):
    """ICC(2,1) from explicit per-cell sums of squares, plain Python loops."""
    n, k = len(y), len(y[0])
    grand = sum(sum(row) for row in y) / (n * k)
    row_means = [sum(row) / k for row in y]
    col_means = [sum(y[i][j] for i in range(n)) / n for j in range(k)]
    ss_rows = ss_cols = ss_err = 0.0
    for i in range(n):
        for j in range(k):
            ss_rows += (row_means[i] - grand) ** 2
            ss_cols += (col_means[j] - grand) ** 2
            ss_err += (y[i][j] - row_means[i] - col_means[j] + grand) ** 2
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_err / ((n - 1) * (k - 1))
    return (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)


def test_criterion_3_icc_matches_anova_oracle():
    rng = np.random.default_rng(20240603)
    worst = 0.0
    for _ in range(100):
        n, k = int(rng.integers(3, 11)), int(rng.integers(2, 6))
        y = rng.normal(20.0, 5.0, size=(n, 1)) + rng.normal(0.0, 2.0, size=(n, k))
        worst = max(worst, abs(icc_2_1(y).icc_2_1 - anova_icc_oracle(y.tolist())))
    ok = worst <= 1e-10
    record_criterion(3, ok, f"100 matrices, n 3-10, k 2-5; max |diff| {worst:.2e}, tol 1e-10")
    assert ok


def test_criterion_4_flight_time_law():
    g = Constants(g=9.81)
    times = np.random.default_rng(4).uniform(0.05, 1.0, 1000)
    scaling = all(height_from_flight_time(2 * t, g) == 4 * height_from_flight_time(t, g) for t in times)
    h = height_from_flight_time(0.45, g)
    exact = Fraction(100) * Fraction(9.81) * Fraction(0.45) ** 2 / 8
    err = abs(Fraction(h) - exact)
    ok = scaling and err <= Fraction(1, 10**10) and round(h, 2) == 24.83
    record_criterion(
        4, ok, f"h(2T)==4h(T) on 1000 T: {scaling}; h(0.45)={h!r} (24.83 at 2 dp), |h - exact| {float(err):.1e}"
    )
    assert ok


def _per_rep(result, method):
    return {m.repetition_id.rep: m.height_cm for m in result.measurements if m.method is method}


def test_criterion_5_end_to_end_recovery(tmp_path):
    clean = generate(SynthJumpSpec(true_height_cm=20.0, reps=3, scale_mm_per_px=3.5, fps=30.0))
    result = run_session(write_session(clean, tmp_path / "clean"))
    tol = {Method.FP: 0.2, Method.PTM: 0.3, Method.RMM: 0.2}
    clean_err = {
        m: max((abs(h - 20.0) for h in _per_rep(result, m).values()), default=np.inf) for m in tol
    }
    complete = all(len(_per_rep(result, m)) == 3 for m in tol)
    r_err = max(abs(c.r_mm_per_px - 3.5) / 3.5 for c in result.calibrations)
    clean_ok = complete and all(clean_err[m] <= tol[m] for m in tol) and r_err <= 0.02

    noisy_err = {m: 0.0 for m in Method}
    missing = 0
    for seed in range(20):
        spec = SynthJumpSpec(true_height_cm=20.0, seed=seed, noise_px_sd=2.0, noise_n_sd=2.0)
        res = run_session(write_session(generate(spec), tmp_path / f"seed{seed}"))
        for m in Method:
            got = _per_rep(res, m)
            missing += 3 - len(got)
            for h in got.values():
                noisy_err[m] = max(noisy_err[m], abs(h - 20.0))
    noisy_ok = missing == 0 and max(noisy_err.values()) <= 1.0

    ok = clean_ok and noisy_ok
    record_criterion(
        5,
        ok,
        "noiseless max |err| "
        + ", ".join(f"{m.value} {e:.3f}" for m, e in clean_err.items())
        + f" cm, R err {100 * r_err:.2f}% [{'ok' if clean_ok else 'FAIL'}]; "
        + "noisy 20 seeds max |err| "
        + ", ".join(f"{m.value} {e:.2f}" for m, e in noisy_err.items())
        + f" cm, {missing} missing [{'ok' if noisy_ok else 'FAIL'}]",
    )
    assert ok


def test_criterion_6_segmentation_exactness():
    bad = []
    worst = 0.0
    for seed in range(50):
        noise = 2.0 * (seed % 5 + 1) / 5  # 0.4 .. 2.0 px
        session = generate(SynthJumpSpec(seed=seed, noise_px_sd=noise))
        hip = denoise(extract_vertical(session.keypoints, "RHip").series)
        seg = segment_repetitions(hip)
        truth = [r.apex_s * hip.rate_hz for r in session.truth.reps]
        if len(seg) != len(truth):
            bad.append(f"seed {seed}: {len(seg)} segments")
            continue
        off = max(abs(p - t) for p, t in zip(seg.peak_indices, truth))
        worst = max(worst, off)
        if off > 1:
            bad.append(f"seed {seed}: apex off {off:.2f} frames")
    ok = not bad
    record_criterion(
        6, ok, f"50 seeds, noise 0.4-2 px; max apex offset {worst:.2f} frames" + (f"; {bad[:3]}" if bad else "")
    )
    assert ok


def test_criterion_7_filter_properties():
    rng = np.random.default_rng(7)
    t = np.arange(300, dtype=float)
    poly_err = 0.0
    for _ in range(50):
        coef = rng.normal(0.0, [50.0, 1.0, 0.01])
        for degree in range(3):
            y = sum(coef[d] * t**d for d in range(degree + 1))
            out = savgol_smooth(TimeSeries(y, 100.0, Unit.MILLIMETRES), DenoiseConfig(savgol_window=21))
            poly_err = max(poly_err, np.max(np.abs(out.samples - y)))
    sg_ok = poly_err <= 1e-9

    caught = injected = moved = at_edge = 0
    for _ in range(50):
        clean = 50.0 * np.sin(2 * np.pi * t / rng.uniform(60, 150)) + rng.uniform(-100, 100)
        where = np.sort(rng.choice(np.arange(10, 290, 14), size=8, replace=False))
        x = clean.copy()
        for i in where:
            local_sd = np.std(np.delete(clean[i - 5 : i + 6], 5), ddof=1)
            x[i] += rng.choice([-1, 1]) * rng.uniform(10, 30) * local_sd
        series = TimeSeries(x, 30.0, Unit.PIXELS)
        mask = zscore_spike_mask(series)
        out = zscore_despike(series).samples
        injected += len(where)
        caught += int(np.sum(mask[where]))
        keep = np.ones(len(x), bool)
        keep[where] = False
        altered = np.flatnonzero(keep & (out != x))
        moved += altered.size
        at_edge += int(np.sum((altered < 5) | (altered >= len(x) - 5)))
    despike_ok = caught == injected and moved == 0

    ok = sg_ok and despike_ok
    record_criterion(
        7,
        ok,
        f"SG(21,2) max polynomial error {poly_err:.1e}; spikes removed {caught}/{injected}, "
        f"non-spike samples altered {moved} ({at_edge} within 5 samples of an end)",
    )
    assert ok


def test_criterion_8_study_replay_not_reproducible():
    record_criterion(
        8,
        None,
        "raw study recordings are not available; criteria 1-2 replay the reference means, 3-7 are property checks",
        status="NOT REPRODUCIBLE",
    )
    pytest.skip("full study replay needs raw recordings that are not available")
