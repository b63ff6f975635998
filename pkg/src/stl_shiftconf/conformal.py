"""Split conformal prediction on robustness scores, with and without weights.

The nonconformity score of ``(X, Y)`` is ``-Y * rho(X)`` with exact
robustness, so the prediction set ``{y : -y rho(X) <= T}`` contains +1 when
``rho >= -T`` and -1 when ``rho <= T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import DegenerateWeightError
from .stl import robustness, robustness_batch
from .stl.formula import Formula

# Slack on the quantile conditions so that e.g. (n+1)(1-alpha) = 9.000000000000002
# still selects the 9th order statistic.
_TOL = 1e-12


class Mode(str, Enum):
    STANDARD = "standard"
    WEIGHTED_PAPER = "weighted_paper"
    WEIGHTED_TIBSHIRANI = "weighted_tibshirani"


MODES = tuple(m.value for m in Mode)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return alpha


@dataclass(frozen=True)
class NonconformityScore:
    value: float
    trajectory_id: str = ""
    label: int = 1

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("nonconformity score must be finite")


def score_value(rho, label):
    return -np.asarray(label, dtype=float) * np.asarray(rho, dtype=float)


def score(formula: Formula, trajectory, label: int) -> NonconformityScore:
    rho = robustness(formula, trajectory)
    value = float(score_value(rho, label))
    # -0.0 and 0.0 compare equal; keep the printed value clean.
    return NonconformityScore(value + 0.0, str(getattr(trajectory, "id", "")), int(label))


def scores(formula: Formula, dataset) -> np.ndarray:
    return score_value(robustness_batch(formula, dataset.states), dataset.labels) + 0.0


def standard_threshold(values, alpha: float) -> float:
    """k-th smallest score with ``k = ceil((n + 1)(1 - alpha))``; +inf if k > n."""
    s = np.sort(np.asarray(values, dtype=float))
    alpha = _check_alpha(alpha)
    if s.size == 0:
        raise ValueError("need at least one calibration score")
    k = math.ceil((s.size + 1) * (1 - alpha) - _TOL)
    return math.inf if k > s.size else float(s[k - 1])


def _weights_array(weights) -> np.ndarray:
    return np.asarray(getattr(weights, "clipped", weights), dtype=float)


def _prepare(values, weights):
    s = np.asarray(values, dtype=float).ravel()
    w = _weights_array(weights).ravel()
    if s.size == 0:
        raise ValueError("need at least one calibration score")
    if w.shape != s.shape:
        raise ValueError(f"{w.size} weights for {s.size} scores")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if not np.any(w > 0):
        raise DegenerateWeightError("all calibration weights are zero")
    order = np.argsort(s, kind="stable")
    return s[order], np.cumsum(w[order])


def _quantile(sorted_s, cum, alpha, extra) -> np.ndarray:
    """Smallest score whose weighted mass reaches ``1 - alpha`` of
    ``cum[-1] + extra``; +inf when no score does."""
    extra = np.asarray(extra, dtype=float)
    target = (1 - alpha) * (cum[-1] + extra) - _TOL * (cum[-1] + extra)
    idx = np.searchsorted(cum, target, side="left")
    out = np.full(idx.shape, math.inf)
    ok = idx < sorted_s.size
    out[ok] = sorted_s[idx[ok]]
    return out


def weighted_threshold(values, weights, alpha: float, mode: str | Mode = Mode.WEIGHTED_PAPER,
                       test_weight=None):
    """Quantile of the weighted empirical distribution of calibration scores.

    ``weighted_paper`` uses the calibration weights alone. ``weighted_tibshirani``
    also places the test point's weight at +inf; ``test_weight`` may be an array
    and yields one threshold per test point.
    """
    alpha = _check_alpha(alpha)
    mode = Mode(mode)
    s, cum = _prepare(values, weights)
    if mode is Mode.WEIGHTED_PAPER:
        return float(_quantile(s, cum, alpha, 0.0))
    if mode is not Mode.WEIGHTED_TIBSHIRANI:
        raise ValueError("weighted_threshold needs a weighted mode")
    if test_weight is None:
        raise ValueError("weighted_tibshirani needs the test point's weight")
    tw = np.asarray(_weights_array(test_weight), dtype=float)
    if np.any(tw < 0) or np.any(np.isnan(tw)):
        raise ValueError("test weights must be nonnegative")
    out = _quantile(s, cum, alpha, tw)
    return float(out) if out.ndim == 0 else out


@dataclass
class CalibrationResult:
    scores: np.ndarray
    alpha: float
    mode: Mode
    threshold: float
    weights: np.ndarray | None = None
    _sorted: np.ndarray | None = field(default=None, repr=False)
    _cum: np.ndarray | None = field(default=None, repr=False)

    def thresholds(self, test_weights=None) -> np.ndarray | float:
        """Per-test thresholds for weighted_tibshirani, the fixed threshold otherwise."""
        if self.mode is not Mode.WEIGHTED_TIBSHIRANI:
            return self.threshold
        if test_weights is None:
            raise ValueError("weighted_tibshirani needs test-point weights")
        tw = _weights_array(test_weights)
        return _quantile(self._sorted, self._cum, self.alpha, tw)


def calibrate(values, alpha: float, mode: str | Mode = Mode.STANDARD,
              weights=None) -> CalibrationResult:
    """Calibration result for precomputed scores.

    For weighted_tibshirani ``threshold`` holds the test-free value (extra mass
    zero), which is a lower bound on every per-test threshold.
    """
    alpha = _check_alpha(alpha)
    mode = Mode(mode)
    s = np.asarray(values, dtype=float).ravel()
    if mode is Mode.STANDARD:
        return CalibrationResult(s, alpha, mode, standard_threshold(s, alpha))
    if weights is None:
        raise ValueError(f"mode {mode.value} needs calibration weights")
    w = _weights_array(weights).ravel()
    sorted_s, cum = _prepare(s, w)
    thr = float(_quantile(sorted_s, cum, alpha, 0.0))
    return CalibrationResult(s, alpha, mode, thr, w, sorted_s, cum)


def calibrate_formula(formula: Formula, cal, alpha: float, mode: str | Mode = Mode.STANDARD,
                      weights=None) -> CalibrationResult:
    return calibrate(scores(formula, cal), alpha, mode, weights)


def set_membership(rho, threshold) -> tuple[np.ndarray, np.ndarray]:
    """Boolean masks (contains +1, contains -1) for robustness values ``rho``."""
    rho = np.asarray(rho, dtype=float)
    thr = np.asarray(threshold, dtype=float)
    return -rho <= thr, rho <= thr


def prediction_set(formula: Formula, trajectory, threshold) -> frozenset[int]:
    """Labels whose score does not exceed ``threshold``.

    ``threshold`` is a number or a mapping ``{+1: T_pos, -1: T_neg}``.
    """
    rho = robustness(formula, trajectory)
    if isinstance(threshold, dict):
        t_pos, t_neg = threshold[1], threshold[-1]
    else:
        t_pos = t_neg = threshold
    out = set()
    if -rho <= t_pos:
        out.add(1)
    if rho <= t_neg:
        out.add(-1)
    return frozenset(out)


def metrics_from_robustness(rho, labels, threshold) -> dict:
    rho = np.asarray(rho, dtype=float)
    y = np.asarray(labels)
    if rho.size == 0:
        raise ValueError("test set is empty")
    has_pos, has_neg = set_membership(rho, threshold)
    size = has_pos.astype(int) + has_neg.astype(int)
    covered = np.where(y == 1, has_pos, has_neg)
    pred = np.where(rho > 0, 1, -1)
    return {
        "coverage": float(np.mean(covered)),
        "inefficiency": float(np.mean(size)),
        "mcr": float(np.mean(pred != y)),
        "set_size_hist": [int(np.sum(size == k)) for k in range(3)],
    }


def evaluate(formula: Formula, test, calibration: CalibrationResult, test_weights=None) -> dict:
    """Coverage, inefficiency, misclassification rate and set-size histogram.

    The reported threshold is the median per-test threshold for
    weighted_tibshirani.
    """
    rho = robustness_batch(formula, test.states)
    thr = calibration.thresholds(test_weights)
    out = {"alpha": calibration.alpha, "mode": calibration.mode.value,
           "threshold": float(np.median(thr))}
    out.update(metrics_from_robustness(rho, test.labels, thr))
    return out


def sweep(formula: Formula, cal, test, alphas: Iterable[float], modes: Iterable[str],
          cal_weights=None, test_weights=None) -> list[dict]:
    """Metrics for every (alpha, mode) pair, alphas outermost."""
    cal_scores = scores(formula, cal)
    rho = robustness_batch(formula, test.states)
    rows = []
    for alpha in alphas:
        for mode in modes:
            res = calibrate(cal_scores, alpha, mode, cal_weights)
            thr = res.thresholds(test_weights)
            row = {"alpha": float(alpha), "mode": res.mode.value,
                   "threshold": float(np.median(thr))}
            row.update(metrics_from_robustness(rho, test.labels, thr))
            rows.append(row)
    return rows
