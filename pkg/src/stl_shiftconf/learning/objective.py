"""Surrogate losses for formula learning and their exact gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..divergence import JrdConfig, jrd_value_and_grad
from ..errors import ShapeError
from .learnable import LearnableFormula


def logistic_loss(margin):
    """``log(1 + exp(-m))`` evaluated without overflow."""
    m = np.asarray(margin, dtype=float)
    out = np.where(
        m < -30, -m,
        np.where(m > 30, np.exp(-np.clip(m, 30, None)), np.log1p(np.exp(-np.clip(m, -30, 30)))),
    )
    return float(out) if out.ndim == 0 else out


def logistic_loss_grad(margin):
    """Derivative of ``logistic_loss``: ``-sigmoid(-m)``."""
    return -expit(-np.asarray(margin, dtype=float))


def _labels(ds) -> np.ndarray:
    return np.asarray(ds.labels, dtype=float)


def _weights(weights) -> np.ndarray:
    return np.asarray(getattr(weights, "clipped", weights), dtype=float)


@dataclass
class Objective:
    """Shift-aware objective at a fixed temperature and JRD bandwidth.

    ``total = mean_train l(y r) + mean_dep w l(y r) + lambda_jrd * JRD(r_train, r_dep)``
    where ``r`` is smooth robustness. Without ``dep`` only the first term is
    active (the nominal loss).
    """

    lf: LearnableFormula
    train: object
    dep: object | None = None
    weights: object | None = None
    beta: float = 10.0
    lambda_jrd: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        self._Z_train = self.lf.standardize(self.train.states)
        self._y_train = _labels(self.train)
        self._n = len(self._y_train)
        if self._n == 0:
            raise ShapeError("training set is empty")
        if self.dep is None:
            self._Z = self._Z_train
            self._y = self._y_train
            self._w = None
            return
        self._y_dep = _labels(self.dep)
        w = np.ones(len(self._y_dep)) if self.weights is None else _weights(self.weights)
        if w.shape != self._y_dep.shape:
            raise ShapeError(f"{w.size} weights for {self._y_dep.size} deployment samples")
        if self.lambda_jrd < 0:
            raise ValueError("lambda_jrd must be nonnegative")
        self._w = w
        self._Z = np.concatenate([self._Z_train, self.lf.standardize(self.dep.states)])
        self._y = np.concatenate([self._y_train, self._y_dep])

    def with_beta(self, beta: float) -> "Objective":
        obj = object.__new__(Objective)
        obj.__dict__.update(self.__dict__)
        obj.beta = float(beta)
        return obj

    def values(self, theta) -> np.ndarray:
        return self.lf.forward(theta, self._Z, self.beta)[0]

    def evaluate(self, theta, need_grad: bool = False):
        """``(total, parts, grad)``; ``parts = (train, dep, jrd)`` and grad is
        None unless requested."""
        grad = np.zeros(self.lf.n_params) if need_grad else None
        r, backward = self.lf.forward(theta, self._Z, self.beta, grad)
        n = self._n
        m = self._y * r
        train_term = float(np.mean(logistic_loss(m[:n])))
        dr = np.zeros_like(r)
        dr[:n] = self._y[:n] * logistic_loss_grad(m[:n]) / n
        dep_term = jrd_term = 0.0
        if self._w is not None:
            n_dep = len(self._w)
            dep_term = float(np.mean(self._w * logistic_loss(m[n:])))
            dr[n:] = self._w * self._y[n:] * logistic_loss_grad(m[n:]) / n_dep
            if self.lambda_jrd > 0:
                jrd_term, gp, gq = jrd_value_and_grad(r[:n], r[n:], self.sigma)
                dr[:n] += self.lambda_jrd * gp
                dr[n:] += self.lambda_jrd * gq
            else:
                jrd_term = jrd_value_and_grad(r[:n], r[n:], self.sigma)[0]
        total = train_term + dep_term + self.lambda_jrd * jrd_term
        if need_grad:
            backward(dr)
        return total, (train_term, dep_term, jrd_term), grad

    def __call__(self, theta) -> float:
        return self.evaluate(theta)[0]

    def loss_without_jrd(self, theta) -> float:
        _, (a, b, _), _ = self.evaluate(theta)
        return a + b


def gradient(objective: Objective, theta) -> np.ndarray:
    """Exact gradient of the smooth objective with respect to ``theta``."""
    return objective.evaluate(theta, need_grad=True)[2]


def nominal_loss(lf: LearnableFormula, theta, train, beta: float = 10.0) -> float:
    return Objective(lf, train, beta=beta).evaluate(theta)[0]


def shift_aware_loss(lf: LearnableFormula, theta, train, dep, weights, beta: float = 10.0,
                     lambda_jrd: float = 0.1, jrd: JrdConfig | float = JrdConfig()):
    """Total objective and its ``(train, dep, jrd)`` parts.

    With the median bandwidth, sigma is set from the current robustness values.
    """
    obj = Objective(lf, train, dep, weights, beta, lambda_jrd)
    obj.sigma = resolve_sigma(obj, theta, jrd)
    total, parts, _ = obj.evaluate(theta)
    return total, parts


def resolve_sigma(obj: Objective, theta, jrd: JrdConfig | float) -> float:
    if isinstance(jrd, (int, float)):
        return float(jrd)
    r = obj.values(theta)
    return jrd.resolve(r[: obj._n], r[obj._n:])
