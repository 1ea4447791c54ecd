import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jumpheight.exceptions import InputError, NonPhysicalError, PairingError, UnitMismatchError
from jumpheight.kinemetrics import (
    anova_mean_squares,
    bland_altman,
    bland_altman_points,
    icc_2_1,
    jump_height_from_displacement,
    test_retest_reliability as trr,
)
from jumpheight.model import JumpSegment, Source

from conftest import mm, px


def brute_force_icc(y):
    """ICC(2,1) from sums of squares accumulated cell by cell."""
    n, k = len(y), len(y[0])
    total = 0.0
    for row in y:
        for v in row:
            total += v
    grand = total / (n * k)
    row_mean = [sum(r) / k for r in y]
    col_mean = [sum(y[i][j] for i in range(n)) / n for j in range(k)]
    ssr = ssc = sse = 0.0
    for i in range(n):
        for j in range(k):
            ssr += (row_mean[i] - grand) ** 2
            ssc += (col_mean[j] - grand) ** 2
            sse += (y[i][j] - row_mean[i] - col_mean[j] + grand) ** 2
    msr, msc, mse = ssr / (n - 1), ssc / (k - 1), sse / ((n - 1) * (k - 1))
    return (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)


def seg(values, apex=None):
    s = mm(values)
    return JumpSegment(s, int(np.argmax(values)) if apex is None else apex, Source.OMC)


# -- heights ---------------------------------------------------------------------


def test_height_stance_to_apex():
    values = [40.0] * 20 + [140.0, 240.0, 140.0] + [40.0] * 10
    assert jump_height_from_displacement(seg(values)) == pytest.approx(20.0)


def test_height_synthetic_25cm():
    from jumpheight.ingest import extract_vertical
    from jumpheight.preprocess import cut_like, segment_repetitions
    from jumpheight.synth import SynthJumpSpec, generate

    s = generate(SynthJumpSpec(true_height_cm=25.0))
    hip = extract_vertical(s.markers, "hip").series
    toe = extract_vertical(s.markers, "toe").series
    for piece in segment_repetitions(hip):
        assert jump_height_from_displacement(cut_like(toe, piece)) == pytest.approx(25.0, abs=0.15)


def test_height_flat_segment():
    with pytest.raises(NonPhysicalError):
        jump_height_from_displacement(seg([5.0] * 10, apex=0))


def test_height_requires_mm():
    with pytest.raises(UnitMismatchError):
        jump_height_from_displacement(JumpSegment(px([0, 1, 0]), 1, Source.MMC))


@given(arrays(np.float64, st.integers(3, 40), elements=st.floats(-500, 500)), st.floats(0.01, 100))
def test_height_scale_equivariant(x, c):
    try:
        h = jump_height_from_displacement(seg(x))
    except NonPhysicalError:
        return
    assert jump_height_from_displacement(seg(c * x)) == pytest.approx(c * h, rel=1e-9)


# -- ICC -------------------------------------------------------------------------


def test_icc_identical_columns():
    x = np.array([1.0, 4.0, 2.0, 8.0])
    assert icc_2_1(np.c_[x, x]).icc_2_1 == pytest.approx(1.0)


def test_icc_large_offset_tends_to_zero():
    x = np.array([1.0, 4.0, 2.0, 8.0])
    assert 0 < icc_2_1(np.c_[x, x + 1e4]).icc_2_1 < 1e-6


def test_icc_random_6x4_matches_oracle():
    y = np.random.default_rng(7).integers(0, 20, size=(6, 4)).astype(float)
    assert icc_2_1(y).icc_2_1 == pytest.approx(brute_force_icc(y.tolist()), abs=1e-10)


def test_icc_errors():
    with pytest.raises(InputError):
        icc_2_1([[1.0, np.nan], [2.0, 3.0]])
    with pytest.raises(ValueError):
        icc_2_1([[1.0, 2.0]])
    with pytest.raises(ValueError):
        icc_2_1([[1.0], [2.0]])
    with pytest.raises(InputError):
        icc_2_1(np.full((3, 2), 52.12395014))


def test_icc_negative_reported_as_computed():
    res = icc_2_1([[1.0, 3.0], [3.0, 1.0], [2.0, 2.0]])
    assert res.icc_2_1 < 0 and res.negative


def test_mean_squares_against_statsmodels_free_formula():
    y = np.random.default_rng(3).normal(size=(5, 3))
    msr, msc, mse = anova_mean_squares(y)
    n, k = y.shape
    ss_total = ((y - y.mean()) ** 2).sum()
    assert (n - 1) * msr + (k - 1) * msc + (n - 1) * (k - 1) * mse == pytest.approx(ss_total, rel=1e-12)


# cells on a 1/64 grid; near-constant matrices make ICC a ratio of rounding noise
matrices = st.tuples(st.integers(3, 10), st.integers(2, 5)).flatmap(
    lambda nk: arrays(np.int64, nk, elements=st.integers(-6400, 6400)).map(lambda a: a / 64.0)
).filter(lambda y: np.ptp(y) > 0)


@settings(max_examples=100)
@given(matrices)
def test_icc_matches_brute_force(y):
    want = brute_force_icc(y.tolist())
    assert icc_2_1(y).icc_2_1 == pytest.approx(want, abs=1e-10)


@settings(max_examples=60)
@given(matrices, st.floats(-1e3, 1e3), st.floats(0.01, 100))
def test_icc_shift_and_scale_invariant(y, shift, scale):
    base = icc_2_1(y).icc_2_1
    assert icc_2_1(y + shift).icc_2_1 == pytest.approx(base, abs=1e-10)
    assert icc_2_1(y * scale).icc_2_1 == pytest.approx(base, abs=1e-10)


# -- Bland-Altman -----------------------------------------------------------------


def test_ba_identical():
    r = bland_altman([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert (r.bias_cm, r.sd_cm, r.loa_low_cm, r.loa_high_cm) == (0, 0, 0, 0)


def test_ba_hand_arithmetic():
    r = bland_altman([1.0, 3.0], [0.0, 0.0])
    assert r.bias_cm == 2 and r.sd_cm == pytest.approx(math.sqrt(2))
    assert r.loa_low_cm == pytest.approx(2 - 1.96 * math.sqrt(2))
    assert r.loa_high_cm == pytest.approx(2 + 1.96 * math.sqrt(2))


def test_ba_errors():
    with pytest.raises(PairingError):
        bland_altman([1.0, 2.0], [1.0])
    with pytest.raises(InputError):
        bland_altman([1.0], [1.0])


pairs = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        arrays(np.float64, n, elements=st.floats(-100, 100)), arrays(np.float64, n, elements=st.floats(-100, 100))
    )
)


@given(pairs)
def test_ba_antisymmetric(ab):
    a, b = ab
    x, y = bland_altman(a, b), bland_altman(b, a)
    assert x.bias_cm == -y.bias_cm and x.sd_cm == y.sd_cm


@given(pairs)
def test_ba_loa_width_and_mean_difference(ab):
    a, b = ab
    r = bland_altman(a, b)
    assert r.loa_high_cm - r.loa_low_cm == pytest.approx(2 * 1.96 * r.sd_cm, abs=1e-12)
    assert r.loa_low_cm <= r.bias_cm <= r.loa_high_cm
    assert r.bias_cm == pytest.approx(a.mean() - b.mean(), abs=1e-12)


def test_ba_points():
    mean, diff = bland_altman_points([2.0, 4.0], [0.0, 2.0])
    assert list(mean) == [1.0, 3.0] and list(diff) == [2.0, 2.0]


# -- test-retest ------------------------------------------------------------------


def test_trr_identical_reps():
    y = np.repeat(np.array([[10.0], [20.0], [15.0]]), 3, axis=1)
    assert trr(y) == pytest.approx(1.0)


def test_trr_random_5x3_oracle():
    y = np.random.default_rng(11).normal(20, 5, size=(5, 3))
    assert trr(y) == pytest.approx(brute_force_icc(y.tolist()), abs=1e-10)


def test_trr_drops_incomplete_rows():
    y = np.array([[10, 11, 10.5], [20, 19, 21], [15, np.nan, 14], [30, 29, 31.0]])
    assert trr(y) == pytest.approx(brute_force_icc(y[[0, 1, 3]].tolist()), abs=1e-10)
    with pytest.raises(InputError):
        trr(y[[0, 2]])
