import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import label_volume, prob_volume
from conseg.conformal import (
    CalibrationModel,
    ConformalSegmenter,
    PredictionSet,
    calibrate,
    classify,
    classify_volume,
    conformal_rank,
    coverage,
    nonconformity,
    prediction_set,
    prediction_sets,
    select_ncst,
)
from conseg.normalization import NormalizationParams, normalize
from conseg.volume import Status

NORM = NormalizationParams(0.5)


@pytest.mark.parametrize("p, label, expected", [(1.0, 1, 0.0), (0.0, 1, 1.0), (0.3, 0, 0.3)])
def test_nonconformity(p, label, expected):
    assert nonconformity(p, label) == expected


def test_rank_example():
    assert select_ncst([0.1, 0.2, 0.3], 0.5) == 0.2
    assert conformal_rank(3, 0.5) == 2


def test_rank_overflow_falls_back_to_one():
    assert conformal_rank(3, 0.002) == 4
    assert select_ncst([0.1, 0.2, 0.3], 0.002) == 1.0
    model = CalibrationModel(0.002, 1.0, 3, NORM)
    assert model.rank_overflow


def test_rank_uses_decimal_alpha():
    # (n + 1)(1 - 0.1) = 9 exactly; binary 0.1 must not push it to 10
    assert conformal_rank(9, 0.1) == 9
    assert conformal_rank(999, 0.002) == 998


def test_uniform_scores_quantile(rng):
    s = rng.random(10_000)
    assert abs(select_ncst(s, 0.1) - 0.9) < 0.02


def _oracle_ncst(scores, alpha_milli):
    n = len(scores)
    k = -((-(n + 1) * (1000 - alpha_milli)) // 1000)
    if k > n:
        return 1.0
    return sorted(scores)[k - 1]


def test_select_matches_sort_then_index(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 400))
        a = int(rng.choice([2, 10, 50, 100, 250, 500, 900]))
        s = rng.random(n)
        if rng.random() < 0.3:
            s = np.round(s, 1)  # ties
        assert select_ncst(s, a / 1000) == _oracle_ncst(list(s), a)


@pytest.mark.parametrize(
    "p, ncst, sets, status",
    [
        (0.95, 0.9, (False, True), Status.CERTAIN_1),
        (0.5, 0.9, (True, True), Status.UNCERTAIN),
        (0.5, 0.3, (False, False), Status.UNCERTAIN),
        (0.05, 0.9, (True, False), Status.CERTAIN_0),
    ],
)
def test_prediction_set_examples(p, ncst, sets, status):
    ps = prediction_set(p, ncst)
    assert ps == PredictionSet(*sets)
    assert ps.status == status


def test_classify_volume_uniform():
    model = CalibrationModel(0.1, 0.9, 10, NORM)
    ones = classify_volume(prob_volume(np.ones((2, 2, 2))), model)
    assert (ones.values == Status.CERTAIN_1).all()
    half = classify_volume(prob_volume(np.full((2, 2, 2), 0.5)), CalibrationModel(0.1, 0.5, 10, NORM))
    assert (half.values == Status.UNCERTAIN).all()


def test_classify_volume_matches_scalar_oracle():
    vals = np.array([0.05, 0.5, 0.95, 0.08, 0.92, 0.1, 0.9, 0.3]).reshape(2, 2, 2)
    cv = classify_volume(prob_volume(vals), CalibrationModel(0.1, 0.9, 10, NORM))
    for idx in np.ndindex(2, 2, 2):
        assert cv.values[idx] == prediction_set(vals[idx], 0.9).status


def test_coverage_examples():
    lab = np.array([0, 1, 1, 0])
    t = np.ones(4, bool)
    f = np.zeros(4, bool)
    assert coverage(t, t, lab) == 1.0
    assert coverage(f, f, lab) == 0.0
    assert coverage(f, t, lab) == 0.5
    assert coverage(f, t, lab, mask=[0, 1, 1, 0]) == 1.0


def test_coverage_shape_check():
    with pytest.raises(ValueError):
        coverage(np.ones(3, bool), np.ones(4, bool), np.ones(4))


@settings(max_examples=100)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=50), st.floats(0, 1), st.floats(0, 1))
def test_sets_monotone_in_ncst(ps, q1, q2):
    lo, hi = sorted((q1, q2))
    a0, a1 = prediction_sets(ps, lo)
    b0, b1 = prediction_sets(ps, hi)
    assert np.all(b0 >= a0) and np.all(b1 >= a1)
    empty_lo = np.count_nonzero(~a0 & ~a1)
    empty_hi = np.count_nonzero(~b0 & ~b1)
    both_lo = np.count_nonzero(a0 & a1)
    both_hi = np.count_nonzero(b0 & b1)
    assert empty_hi <= empty_lo and both_hi >= both_lo


def test_class_agreement_after_normalization(rng):
    for _ in range(100):
        bmot = rng.random()
        raw = rng.random(2000)
        p = normalize(raw, NormalizationParams(bmot))
        s = classify(p, rng.random())
        assert not np.any((s == Status.CERTAIN_1) & (p <= 0.5))
        assert not np.any((s == Status.CERTAIN_0) & (p >= 0.5))


def test_uncertain_band_oracle(rng):
    for _ in range(100):
        q = 0.5 + 0.5 * rng.random()
        p = rng.random(5000)
        s = classify(p, q)
        inside = (p >= 1.0 - q) & (p <= q)
        np.testing.assert_array_equal(s == Status.UNCERTAIN, inside)


def test_segmenter_estimator_roundtrip():
    p = np.array([0.1, 0.2, 0.8, 0.9, 0.6, 0.3])
    y = np.array([0, 0, 1, 1, 1, 0])
    seg = ConformalSegmenter(alpha=0.25).fit(p, y)
    scores = nonconformity(p, y)
    assert seg.ncst_ == select_ncst(scores, 0.25)
    assert seg.n_calibration_voxels_ == 6
    np.testing.assert_array_equal(seg.predict(p), classify(p, seg.ncst_))
    c0, c1 = seg.predict_sets(p)
    assert seg.score(p, y) == coverage(c0, c1, y)


def test_segmenter_multi_case_pools_and_masks():
    a = prob_volume(np.full((2, 2, 2), 0.9))
    b = prob_volume(np.full((2, 2, 2), 0.4))
    ya = label_volume(np.ones((2, 2, 2)))
    yb = label_volume(np.zeros((2, 2, 2)))
    mask = [label_volume(np.ones((2, 2, 2))), label_volume(np.zeros((2, 2, 2)))]
    seg = ConformalSegmenter(alpha=0.1).fit([a, b], [ya, yb], sample_mask=mask)
    assert seg.n_calibration_voxels_ == 8
    out = seg.predict([a, b])
    assert isinstance(out, list) and out[0].geometry == a.geometry


def test_calibrate_builds_model():
    p = [np.array([0.1, 0.9, 0.7])]
    y = [np.array([0, 1, 1])]
    model = calibrate(p, y, 0.5, NORM, case_ids=["c0"])
    assert model.ncst == select_ncst(nonconformity(p[0], y[0]), 0.5)
    assert model.provenance == ["c0"] and model.n_cal == 3


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1])
def test_segmenter_rejects_bad_alpha(alpha):
    with pytest.raises(ValueError):
        ConformalSegmenter(alpha=alpha).fit(np.array([0.5]), np.array([1]))


def test_segmenter_rejects_empty():
    with pytest.raises(ValueError):
        ConformalSegmenter().fit([], [])
