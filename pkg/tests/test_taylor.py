import itertools

import mpmath
import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import special

from fpsketch.errors import BoundNotApplicable, ConfigError, UsageError
from fpsketch.taylor import (
    PowerFunction, TaylorConfig, analytic_mean, averaged_taylor, estimator_bounds, gen_binomial,
    remainder_bound, singh_batch, singh_estimate, taylor_estimate,
)


def test_gen_binomial_examples():
    assert gen_binomial(3, 2) == 3
    assert gen_binomial(2.7, 0) == 1
    assert gen_binomial(2.5, 3) == pytest.approx(0.3125, rel=1e-15)


@given(st.integers(0, 12), st.integers(0, 40))
def test_gen_binomial_integral_vanishes(p, j):
    v = gen_binomial(p, j)
    if j > p:
        assert v == 0.0
    else:
        assert v == pytest.approx(special.comb(p, j, exact=True), rel=1e-14)


@given(st.floats(0.1, 12), st.integers(0, 30))
def test_gen_binomial_matches_gamma_form(p, j):
    assert gen_binomial(p, j) == pytest.approx(special.binom(p, j), rel=1e-10, abs=1e-300)


def test_power_function_rejects_nonpositive():
    with pytest.raises(ConfigError):
        PowerFunction(0)


def test_taylor_config_validation():
    psi = PowerFunction(3)
    with pytest.raises(ConfigError):
        TaylorConfig(psi, 0.0, 3)
    with pytest.raises(ConfigError):
        TaylorConfig(psi, 1.0, -1)
    with pytest.raises(ConfigError):
        TaylorConfig(psi, 1.0, 3, num_groups=0)
    assert TaylorConfig(psi, 1.0, 3, 1, 48).averaging_bounds_apply
    assert not TaylorConfig(psi, 1.0, 3, 1, 47).averaging_bounds_apply


def test_taylor_estimate_examples():
    assert taylor_estimate(TaylorConfig(PowerFunction(3), 2.0, 0), []) == 8.0
    assert taylor_estimate(TaylorConfig(PowerFunction(2), 3.0, 2), [5, 5]) == pytest.approx(25.0, rel=1e-15)
    with pytest.raises(UsageError):
        taylor_estimate(TaylorConfig(PowerFunction(2), 3.0, 2), [5])


@given(st.integers(2, 6), st.integers(0, 10), st.floats(0.01, 1e6), st.floats(0.5, 2.0))
def test_exact_for_integral_p(p, extra, x, ratio):
    k = p + extra
    cfg = TaylorConfig(PowerFunction(p), x * ratio, k)
    assert taylor_estimate(cfg, [x] * k) == pytest.approx(x ** p, rel=1e-12)


def test_taylor_mean_matches_analytic():
    rng = np.random.default_rng(1)
    cfg = TaylorConfig(PowerFunction(2.5), 1.2, 20)
    draws = np.array([taylor_estimate(cfg, x) for x in rng.uniform(1.15, 1.35, size=(100_000, 20))])
    target = analytic_mean(cfg.psi, 1.2, 1.25, 20)
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - target) <= 4 * se


def test_averaged_degenerate_pool():
    cfg = TaylorConfig(PowerFunction(2), 1.5, 2, num_groups=50)
    assert averaged_taylor(cfg, [3.0] * 10, seed=1) == pytest.approx(9.0, rel=1e-14)


@pytest.mark.parametrize("order", ["random", "sorted"])
def test_single_group_is_one_taylor_estimate(order):
    pool = np.random.default_rng(3).uniform(1.6, 2.4, 5)
    cfg = TaylorConfig(PowerFunction(3.5), 2.0, 3, num_groups=1)
    if order == "sorted":
        tuples = list(itertools.combinations(range(5), 3))
    else:
        tuples = list(itertools.permutations(range(5), 3))
    candidates = [taylor_estimate(cfg, pool[list(t)]) for t in tuples]
    assert np.diff(np.sort(candidates)).min() > 1e-9
    seen = set()
    for seed in range(2000):
        v = averaged_taylor(cfg, pool, seed=seed, order=order)
        match = [j for j, c in enumerate(candidates) if abs(v - c) <= 1e-12 * abs(c)]
        assert match
        seen.add(match[0])
    # every tuple shows up
    assert len(seen) == len(candidates)


def test_averaged_reproducible_and_errors():
    cfg = TaylorConfig(PowerFunction(3), 1.0, 4, num_groups=30)
    pool = np.random.default_rng(0).normal(1.0, 0.05, 40)
    assert averaged_taylor(cfg, pool, seed=9) == averaged_taylor(cfg, pool, seed=9)
    with pytest.raises(UsageError):
        averaged_taylor(cfg, pool[:3], seed=1)
    with pytest.raises(UsageError):
        averaged_taylor(cfg, pool, seed=1, order="shuffled")


def test_singh_forced_zero_index():
    psi = PowerFunction(3)
    assert singh_estimate(psi, 1.5, [], seed=4, n_cap=0) == pytest.approx(2 * 1.5 ** 3, rel=1e-15)


def test_singh_constant_samples():
    psi = PowerFunction(3)
    vals = [singh_estimate(psi, 2.0, lambda: 2.0, seed=s) for s in range(2000)]
    assert set(vals) <= {16.0, 0.0}
    assert np.mean(vals) == pytest.approx(8.0, abs=4 * 16 * 0.5 / np.sqrt(2000))


def test_singh_exhausted_source():
    psi = PowerFunction(3)
    with pytest.raises(UsageError):
        for s in range(64):
            singh_estimate(psi, 1.0, [], seed=s)


def test_singh_unbiased_batch():
    psi = PowerFunction(3)
    est = singh_batch(psi, 1.1, lambda rng, shape: rng.uniform(0.9, 1.3, shape), 1_000_000, seed=2)
    se = est.std(ddof=1) / np.sqrt(est.size)
    assert abs(est.mean() - 1.331) <= 4 * se


def test_singh_single_matches_batch_target():
    psi = PowerFunction(3)
    rng = np.random.default_rng(5)
    est = np.array([singh_estimate(psi, 1.1, lambda: rng.uniform(0.9, 1.3), seed=s) for s in range(20_000)])
    se = est.std(ddof=1) / np.sqrt(est.size)
    assert abs(est.mean() - 1.331) <= 4 * se


def test_analytic_mean_trivial_cases():
    psi = PowerFunction(2.7)
    assert analytic_mean(psi, 1.3, 1.3, 5) == pytest.approx(1.3 ** 2.7, rel=1e-15)
    cubic = PowerFunction(3)
    for lam in (0.5, 1.0, 7.0):
        assert analytic_mean(cubic, lam, 2.0, 3) == pytest.approx(8.0, rel=1e-13)
        assert analytic_mean(cubic, lam, 2.0, 10) == pytest.approx(8.0, rel=1e-13)


def test_analytic_mean_against_long_series():
    psi = PowerFunction(2.5)
    with mpmath.workdps(50):
        p, lam, mu = mpmath.mpf("2.5"), mpmath.mpf(1), mpmath.mpf("1.02")
        tail = mpmath.fsum(mpmath.binomial(p, j) * lam ** (p - j) * (mu - lam) ** j for j in range(13, 200))
        ref = float(mu ** p - tail)
    assert analytic_mean(psi, 1.0, 1.02, 12) == pytest.approx(ref, rel=1e-12)


@given(st.floats(2.05, 8), st.integers(1, 30), st.floats(0.1, 100), st.floats(-1, 1))
@settings(max_examples=300)
def test_remainder_bound_holds(p, k, mu, frac):
    lam = mu + frac * mu / (9 * p)
    assume(lam > 0)
    psi = PowerFunction(p)
    err = abs(analytic_mean(psi, lam, mu, k) - mu ** p)
    # float slack on the order of the rounding in mu^p
    assert err <= remainder_bound(psi, lam, mu, k) + 1e-13 * mu ** p


def test_estimator_bounds_examples():
    assert estimator_bounds(3, 10, 0.3, 4, 64, 768).bias_bound == 0.0
    assert estimator_bounds(3, 10, 0.3, 4, 64, 768).var_single == pytest.approx(24300, rel=1e-14)
    k, p, f, sigma = 144, 3, 100.0, 100 / 54
    s, r = 16 * k, 12 * 16 * k
    b = estimator_bounds(p, f, sigma, k, s, r)
    assert b.var_avg <= (1.5 * p * p / s) * f ** (2 * p - 2) * sigma ** 2
    assert estimator_bounds(p, f, sigma, k, s - 1, r).var_avg is None


def test_estimator_bounds_bias_fractional_p():
    b = estimator_bounds(2.5, 100, 1, 16, 256, 3072)
    # k = 16 recovers eps = 2^-2
    assert b.bias_bound == pytest.approx(12.0 ** -8 * 0.25 ** 12 * 100 ** 2.5, rel=1e-14)
    with pytest.raises(BoundNotApplicable):
        estimator_bounds(2.5, 100, 1, 7, 256, 3072)


def test_estimator_bounds_premise():
    with pytest.raises(BoundNotApplicable):
        estimator_bounds(3, 27, 1, 4, 64, 768)
