"""Quantitative STL semantics, exact and log-sum-exp smoothed.

Evaluation is vectorised over a batch of trajectories: every node produces a
signal of shape ``(N, T + 1 - horizon(node))`` holding its robustness at each
time where it is defined.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import HorizonError, ShapeError
from .formula import Always, And, Atom, Eventually, Formula, Not, Or, dimension, horizon


@dataclass(frozen=True)
class SmoothConfig:
    beta: float = 10.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")


def softmax(v: np.ndarray, beta: float, axis: int = -1) -> np.ndarray:
    """``(1/beta) log sum exp(beta v)``, shifted by the max for overflow safety."""
    m = np.max(v, axis=axis, keepdims=True)
    s = np.log(np.sum(np.exp(beta * (v - m)), axis=axis, keepdims=True)) / beta + m
    return np.squeeze(s, axis=axis)


def softmin(v: np.ndarray, beta: float, axis: int = -1) -> np.ndarray:
    return -softmax(-v, beta, axis=axis)


def as_states(x) -> np.ndarray:
    """Batch of state arrays ``(N, T+1, d)`` from a trajectory, array or batch."""
    states = getattr(x, "states", x)
    arr = np.asarray(states, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"expected states of shape (T+1, d) or (N, T+1, d), got {arr.shape}")
    return arr


def _check(formula: Formula, X: np.ndarray) -> None:
    need = dimension(formula)
    if need > X.shape[2]:
        raise ShapeError(f"formula uses x{need - 1} but trajectories have d={X.shape[2]}")
    if horizon(formula) > X.shape[1] - 1:
        raise HorizonError(
            f"formula horizon {horizon(formula)} exceeds trajectory length T={X.shape[1] - 1}"
        )


def _signal(f: Formula, X: np.ndarray, agg_min, agg_max) -> np.ndarray:
    if isinstance(f, Atom):
        a = np.asarray(f.predicate.a)
        return X[:, :, : len(a)] @ a - f.predicate.b
    if isinstance(f, Not):
        return -_signal(f.child, X, agg_min, agg_max)
    if isinstance(f, (And, Or)):
        sigs = [_signal(c, X, agg_min, agg_max) for c in f.children]
        n = min(s.shape[1] for s in sigs)
        stacked = np.stack([s[:, :n] for s in sigs], axis=-1)
        return agg_min(stacked) if isinstance(f, And) else agg_max(stacked)
    child = _signal(f.child, X, agg_min, agg_max)
    length = child.shape[1] - f.t2
    windows = sliding_window_view(child[:, f.t1:], f.t2 - f.t1 + 1, axis=1)[:, :length]
    return agg_max(windows) if isinstance(f, Eventually) else agg_min(windows)


def robustness_signal(formula: Formula, states) -> np.ndarray:
    """Exact robustness at every admissible time, shape ``(N, T+1-h)``."""
    X = as_states(states)
    _check(formula, X)
    return _signal(formula, X, lambda v: v.min(axis=-1), lambda v: v.max(axis=-1))


def _at(signal: np.ndarray, formula: Formula, t: int) -> np.ndarray:
    if t < 0 or t >= signal.shape[1]:
        raise HorizonError(
            f"cannot evaluate at t={t}: formula horizon {horizon(formula)} "
            f"leaves times 0..{signal.shape[1] - 1}"
        )
    return signal[:, t]


def robustness_batch(formula: Formula, states, t: int = 0) -> np.ndarray:
    return _at(robustness_signal(formula, states), formula, t)


def robustness(formula: Formula, trajectory, t: int = 0) -> float:
    """Exact robustness of a single trajectory at time ``t``."""
    X = as_states(trajectory)
    if X.shape[0] != 1:
        raise ShapeError("robustness() takes a single trajectory; use robustness_batch")
    return float(robustness_batch(formula, X, t)[0])


def smooth_robustness_batch(formula: Formula, states, t: int = 0,
                            cfg: SmoothConfig = SmoothConfig()) -> np.ndarray:
    X = as_states(states)
    _check(formula, X)
    beta = cfg.beta
    sig = _signal(formula, X, lambda v: softmin(v, beta), lambda v: softmax(v, beta))
    return _at(sig, formula, t)


def smooth_robustness(formula: Formula, trajectory, t: int = 0,
                      cfg: SmoothConfig = SmoothConfig()) -> float:
    X = as_states(trajectory)
    if X.shape[0] != 1:
        raise ShapeError("smooth_robustness() takes a single trajectory")
    return float(smooth_robustness_batch(formula, X, t, cfg)[0])


def classify_values(rho) -> np.ndarray:
    """+1 where robustness is strictly positive, -1 otherwise (zero included)."""
    return np.where(np.asarray(rho) > 0, 1, -1)


def classify(formula: Formula, trajectory) -> int:
    return int(classify_values(robustness(formula, trajectory, 0)))


def classify_batch(formula: Formula, states) -> np.ndarray:
    return classify_values(robustness_batch(formula, states, 0))
