"""Shared fixtures: a random formula generator and an independent, naive
recursive robustness evaluator used as the oracle for the vectorised one."""
from __future__ import annotations

import numpy as np
import pytest

from stl_shiftconf.stl import Always, And, Atom, Eventually, Not, Or, Predicate


def random_formula(rng: np.random.Generator, depth: int, d: int, budget: int):
    """Random formula of nesting depth <= ``depth`` whose horizon is <= ``budget``."""
    if depth <= 1 or rng.random() < 0.2:
        a = rng.normal(size=d)
        a[rng.random(d) < 0.3] = 0.0
        if not np.any(a):
            a[rng.integers(d)] = 1.0
        return Atom(Predicate(tuple(a), float(rng.normal())))
    kind = rng.integers(5)
    if kind == 0:
        return Not(random_formula(rng, depth - 1, d, budget))
    if kind in (1, 2):
        n = int(rng.integers(2, 4))
        kids = tuple(random_formula(rng, depth - 1, d, budget) for _ in range(n))
        return And(kids) if kind == 1 else Or(kids)
    t2 = int(rng.integers(0, budget + 1))
    t1 = int(rng.integers(0, t2 + 1))
    child = random_formula(rng, depth - 1, d, budget - t2)
    return (Eventually if kind == 3 else Always)(t1, t2, child)


def naive_robustness(f, x, t: int = 0) -> float:
    """Direct transcription of the recursive definition over Python floats."""
    if isinstance(f, Atom):
        a = f.predicate.a
        return sum(float(a[j]) * float(x[t][j]) for j in range(len(a))) - float(f.predicate.b)
    if isinstance(f, Not):
        return -naive_robustness(f.child, x, t)
    if isinstance(f, And):
        return min(naive_robustness(c, x, t) for c in f.children)
    if isinstance(f, Or):
        return max(naive_robustness(c, x, t) for c in f.children)
    vals = [naive_robustness(f.child, x, t + tau) for tau in range(f.t1, f.t2 + 1)]
    return max(vals) if isinstance(f, Eventually) else min(vals)


def random_case(rng: np.random.Generator, max_depth: int = 4, max_T: int = 30, max_d: int = 3):
    d = int(rng.integers(1, max_d + 1))
    T = int(rng.integers(0, max_T + 1))
    f = random_formula(rng, int(rng.integers(1, max_depth + 1)), d, T)
    x = rng.normal(scale=2.0, size=(T + 1, d))
    return f, x


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def gradient_case(rng: np.random.Generator):
    """A random shift-aware objective and parameter point for gradient checks."""
    from stl_shiftconf.data import LabeledDataset
    from stl_shiftconf.learning import LearnableFormula, Objective

    d = int(rng.integers(1, 4))
    T = int(rng.integers(2, 13))
    f = random_formula(rng, int(rng.integers(1, 4)), d, T)
    relaxed = bool(rng.random() < 0.7)

    def dataset(n, role):
        states = rng.normal(scale=2.0, size=(n, T + 1, d))
        labels = rng.choice([-1, 1], size=n)
        return LabeledDataset([f"{role}{i}" for i in range(n)], states, labels, role)

    train = dataset(int(rng.integers(4, 16)), "train")
    dep = dataset(int(rng.integers(3, 11)), "dep")
    mu, sd = train.states.reshape(-1, d).mean(0), train.states.reshape(-1, d).std(0) + 0.5
    lf = LearnableFormula(f, T, d, relaxed, mu, sd)
    obj = Objective(lf, train, dep, rng.uniform(0.05, 5.0, size=len(dep)),
                    beta=float(rng.choice([10.0, 40.0, 160.0])),
                    lambda_jrd=float(rng.uniform(0.05, 1.0)), sigma=float(rng.uniform(0.3, 3.0)))
    theta = lf.random_theta(rng, obj._Z_train) + 0.1 * rng.normal(size=lf.n_params)
    if relaxed:
        theta = lf.project(theta)
    return obj, theta


def finite_difference(obj, theta, h: float = 1e-5) -> np.ndarray:
    out = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        out[i] = (obj(theta + e) - obj(theta - e)) / (2 * h)
    return out


def relative_error(grad: np.ndarray, fd: np.ndarray) -> float:
    """Max absolute deviation relative to the gradient's largest entry."""
    return float(np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-6))
