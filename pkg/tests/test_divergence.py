import math

import mpmath
import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from stl_shiftconf.divergence import (
    EmpiricalRobustnessDist,
    JrdConfig,
    information_potential,
    jrd,
    jrd_gradient,
    jrd_raw,
    jrd_value_and_grad,
    median_bandwidth,
    quadratic_entropy,
)


def test_entropy_single_value_closed_form():
    sigma = 0.7
    expected = 0.5 * math.log(2 * math.pi * 2 * sigma**2)
    assert quadratic_entropy([3.0], sigma) == pytest.approx(expected, abs=1e-14)
    assert quadratic_entropy([3.0] * 5, sigma) == pytest.approx(expected, abs=1e-14)


def test_entropy_two_values_high_precision():
    mpmath.mp.dps = 40
    g = lambda x: mpmath.npdf(x, 0, mpmath.sqrt(2))
    oracle = -mpmath.log((2 * g(0) + 2 * g(1)) / 4)
    assert quadratic_entropy([0.0, 1.0], 1.0) == pytest.approx(float(oracle), abs=1e-14)


def test_entropy_argument_checks():
    with pytest.raises(ValueError):
        quadratic_entropy([1.0], 0.0)
    with pytest.raises(ValueError):
        EmpiricalRobustnessDist([])
    with pytest.raises(ValueError):
        EmpiricalRobustnessDist([np.inf])


def test_identity_symmetry_translation():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = rng.normal(size=int(rng.integers(2, 60)))
        q = rng.normal(1.0, 1.0, size=int(rng.integers(2, 60)))
        assert jrd(p, p) <= 1e-12
        assert jrd(p, q) == jrd(q, p)
        c = rng.normal(scale=5)
        assert abs(jrd(p + c, q + c, 0.8) - jrd(p, q, 0.8)) <= 1e-12


def test_nonnegative_and_pre_clamp_bound_on_equal_spread():
    rng = np.random.default_rng(1)
    for _ in range(500):
        scale = rng.uniform(0.1, 10)
        p = rng.normal(size=int(rng.integers(1, 40))) * scale
        q = rng.normal(rng.normal() * 3, 1, size=int(rng.integers(1, 40))) * scale
        sigma = JrdConfig().resolve(p, q)
        assert jrd(p, q) >= 0
        assert jrd_raw(p, q, sigma) >= -1e-10


def test_pre_clamp_negativity_counterexample():
    # A point mass against a wide spread: the mixture potential exceeds the
    # geometric mean of the marginal ones, so the estimator goes negative.
    p = np.zeros(40)
    q = np.linspace(-100.0, 100.0, 40)
    assert jrd_raw(p, q, 1.0) < -0.4
    assert jrd(p, q, 1.0) == 0.0
    value, gp, gq = jrd_value_and_grad(p, q, 1.0)
    assert value == 0.0 and not gp.any() and not gq.any()


def test_separation_monotone():
    means = [0, 1, 2, 4, 8]
    vals = np.zeros(len(means))
    for seed in range(10):
        rng = np.random.default_rng(seed)
        p = rng.normal(size=200)
        base = rng.normal(size=200)
        vals += [jrd(p, base + mu) for mu in means]
    assert np.all(np.diff(vals / 10) >= 0)


def _quadrature_jrd(mu_p, mu_q, s):
    """H2 of the exact Gaussian densities (Parzen-smoothed point masses)."""
    def h2(f, lo, hi):
        return -math.log(integrate.quad(lambda x: f(x) ** 2, lo, hi, limit=200, points=[mu_p, mu_q])[0])
    fp = lambda x: norm.pdf(x, mu_p, s)
    fq = lambda x: norm.pdf(x, mu_q, s)
    fm = lambda x: 0.5 * fp(x) + 0.5 * fq(x)
    lo, hi = min(mu_p, mu_q) - 12 * s, max(mu_p, mu_q) + 12 * s
    return h2(fm, lo, hi) - 0.5 * (h2(fp, lo, hi) + h2(fq, lo, hi))


def test_matches_quadrature_on_separated_samples():
    rng = np.random.default_rng(2)
    sigma = 1.0
    p = rng.normal(0.0, 0.05, size=300)
    q = rng.normal(10.0, 0.05, size=300)
    # Parzen density of tightly clustered samples ~ N(mean, sigma^2 + spread^2).
    s = math.sqrt(sigma**2 + 0.05**2)
    oracle = _quadrature_jrd(0.0, 10.0, s)
    assert jrd(p, q, sigma) == pytest.approx(oracle, rel=0.05)


def test_mixture_weights_ignore_sample_counts():
    p = np.zeros(10)
    q = np.full(2, 3.0)
    # Same distributions with different sample counts give the same value.
    assert jrd(p, q, 1.0) == pytest.approx(jrd(np.zeros(1), np.full(1, 3.0), 1.0), abs=1e-12)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    h = 1e-5
    for _ in range(30):
        p = rng.normal(size=int(rng.integers(2, 12)))
        q = rng.normal(1.5, 1.2, size=int(rng.integers(2, 12)))
        sigma = 0.6
        _, gp, gq = jrd_value_and_grad(p, q, sigma)
        fd_p = [(jrd_raw(p + h * e, q, sigma) - jrd_raw(p - h * e, q, sigma)) / (2 * h)
                for e in np.eye(p.size)]
        fd_q = [(jrd_raw(p, q + h * e, sigma) - jrd_raw(p, q - h * e, sigma)) / (2 * h)
                for e in np.eye(q.size)]
        g, fd = np.concatenate([gp, gq]), np.concatenate([fd_p, fd_q])
        assert np.max(np.abs(g - fd)) <= 1e-4 * max(1.0, np.max(np.abs(fd)))


def test_gradient_stationary_at_identity_and_translation():
    rng = np.random.default_rng(4)
    p = rng.normal(size=8)
    gp, gq = jrd_gradient(p, p.copy(), 0.5)
    assert max(np.max(np.abs(gp)), np.max(np.abs(gq))) <= 1e-8
    q = rng.normal(2, 1, size=6)
    gp, gq = jrd_gradient(p, q, 0.5)
    assert abs(gp.sum() + gq.sum()) <= 1e-10


def test_median_bandwidth():
    assert median_bandwidth([0.0, 1.0, 3.0]) == 2.0
    assert median_bandwidth([2.0, 2.0]) == 1.0
    assert JrdConfig(0.3).resolve([0.0], [1.0]) == 0.3
    with pytest.raises(ValueError):
        JrdConfig(-1.0)
    with pytest.raises(ValueError):
        JrdConfig("silverman")


def test_information_potential_weights():
    v = [0.0, 1.0]
    assert information_potential(v, 1.0, [1.0, 0.0]) == pytest.approx(
        information_potential([0.0], 1.0))
