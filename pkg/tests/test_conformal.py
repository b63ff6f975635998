import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stl_shiftconf.conformal import (
    MODES,
    NonconformityScore,
    calibrate,
    metrics_from_robustness,
    prediction_set,
    score,
    set_membership,
    standard_threshold,
    sweep,
    weighted_threshold,
)
from stl_shiftconf.data import LabeledDataset, Trajectory
from stl_shiftconf.errors import DegenerateWeightError
from stl_shiftconf.stl import parse

ATOM = parse("x0 >= 0")


def _traj(rho):
    return Trajectory(np.array([[float(rho)]]), "t")


def _ds(rhos, labels, role="test"):
    return LabeledDataset([f"{role}{i}" for i in range(len(rhos))],
                          np.asarray(rhos, dtype=float)[:, None, None], labels, role)


def test_score_examples():
    assert score(ATOM, _traj(2), 1).value == -2
    assert score(ATOM, _traj(2), -1).value == 2
    for y in (1, -1):
        s = score(ATOM, _traj(0), y).value
        assert s == 0 and math.copysign(1, s) == 1
    with pytest.raises(ValueError):
        NonconformityScore(math.inf)


def test_standard_threshold_examples():
    assert standard_threshold(range(1, 10), 0.1) == 9
    assert standard_threshold([5], 0.5) == 5
    assert standard_threshold([1, 2, 3], 0.05) == math.inf
    assert standard_threshold([3, 1, 2], 0.5) == 2
    with pytest.raises(ValueError):
        standard_threshold([], 0.1)
    with pytest.raises(ValueError):
        standard_threshold([1.0], 1.0)


def test_weighted_threshold_examples():
    assert weighted_threshold([1, 2, 3, 4, 5], np.ones(5), 0.2) == 4
    assert weighted_threshold([1, 2], [3, 1], 0.25) == 1
    assert weighted_threshold([1, 2], [1, 0], 0.01) == 1
    with pytest.raises(DegenerateWeightError):
        weighted_threshold([1, 2], [0, 0], 0.1)
    with pytest.raises(ValueError):
        weighted_threshold([1, 2], [1, -1], 0.1)
    with pytest.raises(ValueError):
        weighted_threshold([1, 2], [1], 0.1)
    with pytest.raises(ValueError):
        weighted_threshold([1, 2], [1, 1], 0.1, "weighted_tibshirani")


def test_tibshirani_mass_at_infinity():
    # Test weight 1 alongside five unit weights: the 0.8 level needs 4.8 of 6.
    assert weighted_threshold([1, 2, 3, 4, 5], np.ones(5), 0.2, "weighted_tibshirani", 1.0) == 5
    assert weighted_threshold([1, 2, 3, 4, 5], np.ones(5), 0.2, "weighted_tibshirani", 2.0) == math.inf
    out = weighted_threshold([1, 2, 3, 4, 5], np.ones(5), 0.2, "weighted_tibshirani",
                             np.array([0.0, 1.0, 2.0]))
    assert out.tolist() == [4, 5, math.inf]


def test_tibshirani_dominates_paper_exhaustively():
    rng = np.random.default_rng(0)
    for _ in range(3000):
        n = int(rng.integers(1, 8))
        s = rng.integers(-3, 4, size=n).astype(float)
        w = rng.choice([0.0, 0.5, 1.0, 2.0, 7.0], size=n)
        if not w.any():
            w[0] = 1.0
        alpha = float(rng.choice([0.05, 0.1, 0.25, 0.5, 0.9]))
        tw = float(rng.choice([0.0, 0.5, 1.0, 3.0]))
        paper = weighted_threshold(s, w, alpha, "weighted_paper")
        tib = weighted_threshold(s, w, alpha, "weighted_tibshirani", tw)
        assert tib >= paper
        if tw == 0.0:
            assert tib == paper


def _ecdf_quantile(s, alpha):
    """Smallest attained score whose empirical CDF reaches 1 - alpha."""
    s = np.sort(s)
    for v in s:
        if np.mean(s <= v) >= 1 - alpha - 1e-12:
            return v
    return math.inf


@given(st.lists(st.integers(-20, 20), min_size=1, max_size=30),
       st.sampled_from([0.05, 0.1, 0.2, 0.3, 0.5, 0.75]),
       st.floats(0.01, 100))
def test_uniform_weights_give_ecdf_quantile(values, alpha, c):
    s = np.array(values, dtype=float)
    assert weighted_threshold(s, np.full(s.size, c), alpha) == _ecdf_quantile(s, alpha)
    # The (n+1)-corrected rule sits at most one order statistic higher.
    std = standard_threshold(s, alpha)
    srt = np.sort(s)
    k = math.ceil(s.size * (1 - alpha) - 1e-12)
    assert srt[k - 1] == _ecdf_quantile(s, alpha)
    assert std in (srt[k - 1], srt[k] if k < s.size else math.inf)


def test_prediction_set_examples():
    assert prediction_set(ATOM, _traj(3), 0.0) == frozenset({1})
    assert prediction_set(ATOM, _traj(0.5), 1.0) == frozenset({1, -1})
    assert prediction_set(ATOM, _traj(5), -6.0) == frozenset()
    assert prediction_set(ATOM, _traj(-2), {1: 3.0, -1: -3.0}) == frozenset({1})


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
def test_prediction_set_cardinality(rho, thr):
    c = prediction_set(ATOM, _traj(rho), thr)
    assert len(c) in (0, 1, 2) and c <= {1, -1}
    assert (len(c) == 2) == (abs(rho) <= thr)


def test_metrics_at_infinite_thresholds():
    rho = np.array([-1.0, 0.5, 2.0])
    y = np.array([1, 1, -1])
    m = metrics_from_robustness(rho, y, math.inf)
    assert (m["coverage"], m["inefficiency"], m["set_size_hist"]) == (1.0, 2.0, [0, 0, 3])
    m = metrics_from_robustness(rho, y, -math.inf)
    assert (m["coverage"], m["inefficiency"], m["set_size_hist"]) == (0.0, 0.0, [3, 0, 0])


def test_hand_built_four_samples():
    # rho, label -> set at T = 0.5:
    #  2.0, +1 -> {+1}       covered, size 1, correct
    # -0.3, +1 -> {+1, -1}   covered, size 2, wrong
    # -1.0, -1 -> {-1}       covered, size 1, correct
    #  1.0, -1 -> {+1}       missed,  size 1, wrong
    m = metrics_from_robustness([2.0, -0.3, -1.0, 1.0], [1, 1, -1, -1], 0.5)
    assert m == {"coverage": 0.75, "inefficiency": 1.25, "mcr": 0.5, "set_size_hist": [0, 3, 1]}


def test_metrics_monotone_in_threshold():
    rng = np.random.default_rng(1)
    rho = rng.normal(size=200)
    y = np.where(rng.random(200) < 0.5, 1, -1)
    prev = None
    for t in np.linspace(-3, 3, 61):
        m = metrics_from_robustness(rho, y, t)
        if prev:
            assert m["coverage"] >= prev["coverage"]
            assert m["inefficiency"] >= prev["inefficiency"]
        prev = m
    with pytest.raises(ValueError):
        metrics_from_robustness([], [], 0.0)


def test_set_membership_masks():
    pos, neg = set_membership([-1.0, 0.0, 1.0], 0.0)
    assert pos.tolist() == [False, True, True]
    assert neg.tolist() == [True, True, False]


def test_exchangeable_coverage():
    rng = np.random.default_rng(2)
    n, trials, alpha = 99, 2000, 0.1
    hits = 0
    for _ in range(trials):
        s = rng.standard_normal(n + 1)
        hits += s[-1] <= standard_threshold(s[:-1], alpha)
    # Exact coverage is k/(n+1) = 0.9 for continuous scores.
    assert abs(hits / trials - 0.9) <= 3 * math.sqrt(0.09 / trials)


def test_calibration_result_and_sweep():
    cal = _ds([2.0, -1.0, 0.5, 1.5, -0.2, 3.0], [1, -1, 1, 1, 1, 1], "cal")
    test = _ds([1.0, -0.5, 0.1], [1, -1, -1])
    w = np.array([1.0, 2.0, 1.0, 0.5, 1.0, 1.0])
    res = calibrate([0.0, 1.0, 2.0], 0.5)
    assert res.thresholds() == res.threshold == 1.0
    rt = calibrate([0.0, 1.0, 2.0], 0.5, "weighted_tibshirani", [1.0, 1.0, 1.0])
    assert rt.threshold == 1.0 and rt.thresholds(np.array([0.0, 3.0, 4.0])).tolist() == [1.0, 2.0, math.inf]
    with pytest.raises(ValueError):
        calibrate([0.0], 0.5, "weighted_paper")
    rows = sweep(ATOM, cal, test, [0.1, 0.3], MODES, w, np.ones(3))
    assert [(r["alpha"], r["mode"]) for r in rows] == [(a, m) for a in (0.1, 0.3) for m in MODES]
    for r in rows:
        assert set(r) == {"alpha", "mode", "threshold", "coverage", "inefficiency", "mcr",
                          "set_size_hist"}
        assert r["mcr"] == pytest.approx(1 / 3)
