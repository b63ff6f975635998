"""Jensen-Renyi divergence between two empirical robustness distributions.

Order-2 Renyi entropies are estimated with a Gaussian Parzen window, which
has the closed form ``H2 = -log sum_ij u_i u_j G_{sigma*sqrt2}(v_i - v_j)``
(the integral of the squared window density). The mixture is the 1/2-1/2
mixture of the two distributions, not of the pooled samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EmpiricalRobustnessDist:
    values: np.ndarray
    role: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError("robustness distribution needs finite, nonempty values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class JrdConfig:
    bandwidth: float | str = "median"

    def __post_init__(self):
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise ValueError(f"bandwidth must be positive or 'median', got {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    def resolve(self, p, q) -> float:
        if self.bandwidth == "median":
            return median_bandwidth(np.concatenate([_values(p), _values(q)]))
        return float(self.bandwidth)


def _values(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=float).ravel()


def median_bandwidth(values) -> float:
    """Median absolute pairwise difference; 1.0 when all values coincide."""
    v = _values(values)
    if v.size < 2:
        return 1.0
    i, j = np.triu_indices(v.size, k=1)
    med = float(np.median(np.abs(v[i] - v[j])))
    return med if med > 0 else 1.0


def _kernel(delta: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian density with standard deviation sigma*sqrt(2) at ``delta``."""
    return np.exp(-delta**2 / (4.0 * sigma**2)) / (2.0 * np.sqrt(np.pi) * sigma)


def information_potential(values, sigma: float, weights=None) -> float:
    v = _values(values)
    u = np.full(v.size, 1.0 / v.size) if weights is None else np.asarray(weights, dtype=float)
    return float(u @ _kernel(v[:, None] - v[None, :], sigma) @ u)


def quadratic_entropy(values, sigma: float, weights=None) -> float:
    """Renyi order-2 entropy of the Parzen density of ``values``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if _values(values).size == 0:
        raise ValueError("values must be nonempty")
    return -float(np.log(information_potential(values, sigma, weights)))


def _terms(p: np.ndarray, q: np.ndarray, sigma: float):
    Kpp = _kernel(p[:, None] - p[None, :], sigma)
    Kqq = _kernel(q[:, None] - q[None, :], sigma)
    Kpq = _kernel(p[:, None] - q[None, :], sigma)
    n, m = p.size, q.size
    Vp = Kpp.sum() / n**2
    Vq = Kqq.sum() / m**2
    C = Kpq.sum() / (n * m)
    Vm = 0.25 * Vp + 0.25 * Vq + 0.5 * C
    return Kpp, Kqq, Kpq, Vp, Vq, C, Vm


def jrd_raw(p, q, sigma: float) -> float:
    """Unclamped estimator ``H2(mixture) - (H2(p) + H2(q)) / 2``."""
    p, q = _values(p), _values(q)
    *_, Vp, Vq, _C, Vm = _terms(p, q, sigma)
    return float(-np.log(Vm) + 0.5 * np.log(Vp) + 0.5 * np.log(Vq))


def jrd_value_and_grad(p, q, sigma: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Clamped JRD and its gradient with respect to every sample value.

    Where the raw estimate is negative the clamp is active and the gradient
    is zero.
    """
    p, q = _values(p), _values(q)
    if p.size == 0 or q.size == 0:
        raise ValueError("both samples must be nonempty")
    Kpp, Kqq, Kpq, Vp, Vq, C, Vm = _terms(p, q, sigma)
    raw = float(-np.log(Vm) + 0.5 * np.log(Vp) + 0.5 * np.log(Vq))
    if raw <= 0.0:
        return 0.0, np.zeros_like(p), np.zeros_like(q)
    n, m = p.size, q.size
    s2 = 2.0 * sigma**2
    # d/dx G(x - y) = -(x - y) / (2 sigma^2) G(x - y)
    dKpp = -(p[:, None] - p[None, :]) / s2 * Kpp
    dKqq = -(q[:, None] - q[None, :]) / s2 * Kqq
    dKpq = -(p[:, None] - q[None, :]) / s2 * Kpq
    dVp = 2.0 * dKpp.sum(axis=1) / n**2
    dVq = 2.0 * dKqq.sum(axis=1) / m**2
    dC_p = dKpq.sum(axis=1) / (n * m)
    dC_q = -dKpq.sum(axis=0) / (n * m)
    gp = -(0.25 * dVp + 0.5 * dC_p) / Vm + 0.5 * dVp / Vp
    gq = -(0.25 * dVq + 0.5 * dC_q) / Vm + 0.5 * dVq / Vq
    return raw, gp, gq


def jrd(p, q, cfg: JrdConfig | float = JrdConfig()) -> float:
    """Nonnegative Jensen-Renyi divergence; symmetric in its arguments."""
    sigma = cfg if isinstance(cfg, (int, float)) else cfg.resolve(p, q)
    p, q = _values(p), _values(q)
    if p.size == 0 or q.size == 0:
        raise ValueError("both samples must be nonempty")
    # Sort the pair so that jrd(p, q) and jrd(q, p) run identical arithmetic.
    if (q.size, tuple(q)) < (p.size, tuple(p)):
        p, q = q, p
    return max(jrd_raw(p, q, sigma), 0.0)


def jrd_gradient(p, q, cfg: JrdConfig | float = JrdConfig()) -> tuple[np.ndarray, np.ndarray]:
    sigma = cfg if isinstance(cfg, (int, float)) else cfg.resolve(p, q)
    _, gp, gq = jrd_value_and_grad(p, q, sigma)
    return gp, gq
