"""Taylor-polynomial estimators for psi(E[X]) with psi(x) = x^p.

All evaluation works on relative deviations z = (X - lambda) / lambda and
multiplies lambda^p back at the end, so large anchors and high degrees
neither overflow nor underflow:

    sum_j C(p, j) lambda^(p-j) prod_{l<=j} (X_l - lambda)
        = lambda^p * sum_j C(p, j) prod_{l<=j} z_l
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Union

import numba
import numpy as np

from .errors import BoundNotApplicable, ConfigError, UsageError

SINGH_CAP = 64


def gen_binomial(p: float, j: int) -> float:
    """p(p-1)...(p-j+1) / j!; exactly 0 for integral p and j > p."""
    if j < 0:
        raise UsageError("j must be non-negative")
    out = 1.0
    for m in range(j):
        out *= (p - m) / (m + 1)
    return out


@dataclass(frozen=True)
class PowerFunction:
    p: float

    def __post_init__(self):
        if not self.p > 0:
            raise ConfigError("exponent p must be positive")

    @property
    def integral(self) -> bool:
        return float(self.p).is_integer()

    def __call__(self, x):
        return np.asarray(x, dtype=float) ** self.p

    def coefficient(self, j: int) -> float:
        """psi^(j)(x) / j! divided by x^(p-j), i.e. C(p, j)."""
        return gen_binomial(self.p, j)

    def taylor_coefficient(self, j: int, lam: float) -> float:
        """a_j(lambda) = psi^(j)(lambda) / j!."""
        return gen_binomial(self.p, j) * lam ** (self.p - j)

    def coefficients(self, k: int) -> np.ndarray:
        out = np.empty(k + 1)
        c = 1.0
        for j in range(k + 1):
            out[j] = c
            c *= (self.p - j) / (j + 1)
        return out

    def effective_degree(self, k: int) -> int:
        """Highest j <= k with a possibly nonzero coefficient."""
        if self.integral:
            return min(k, int(self.p))
        return k


@dataclass(frozen=True)
class TaylorConfig:
    psi: PowerFunction
    anchor: float
    degree: int
    num_groups: int = 1
    pool_size: int = 0

    def __post_init__(self):
        if not self.anchor > 0:
            raise ConfigError("anchor must be positive")
        if self.degree < 0:
            raise ConfigError("degree must be non-negative")
        if self.num_groups < 1:
            raise ConfigError("num_groups must be at least 1")

    @property
    def averaging_bounds_apply(self) -> bool:
        """Premise of the averaged-variance bound: pool >= 16 * degree."""
        return self.pool_size >= 16 * self.degree


def taylor_estimate(cfg: TaylorConfig, samples) -> float:
    """Degree-k Taylor estimator on exactly k samples, in extended precision."""
    x = np.asarray(samples, dtype=np.longdouble).ravel()
    if x.size != cfg.degree:
        raise UsageError(f"expected {cfg.degree} samples, got {x.size}")
    lam = np.longdouble(cfg.anchor)
    z = (x - lam) / lam
    d = cfg.psi.effective_degree(cfg.degree)
    coeffs = cfg.psi.coefficients(d).astype(np.longdouble)
    acc = coeffs[0]
    prod = np.longdouble(1)
    for j in range(d):
        prod *= z[j]
        acc += coeffs[j + 1] * prod
    return float(acc * lam ** np.longdouble(cfg.psi.p))


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_LOW32 = np.uint64(0xFFFFFFFF)


@numba.njit(cache=True, inline="always")
def _splitmix64(state):
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return state, z ^ (z >> np.uint64(31))


@numba.njit(cache=True, inline="always")
def _below(state, bound):
    # Lemire's multiply-shift with rejection: uniform on [0, bound), bound < 2^32
    b = np.uint64(bound)
    state, x = _splitmix64(state)
    m = (x >> np.uint64(32)) * b
    low = m & _LOW32
    if low < b:
        thresh = (np.uint64(1 << 32) - b) % b
        while low < thresh:
            state, x = _splitmix64(state)
            m = (x >> np.uint64(32)) * b
            low = m & _LOW32
    return state, np.int64(m >> np.uint64(32))


@numba.njit(cache=True)
def _averaged_kernel(z, coeffs, k, r, sorted_order, seed):
    state = np.uint64(seed)
    s = z.shape[0]
    d = coeffs.shape[0] - 1
    perm = np.arange(s)
    chosen = np.empty(k, dtype=np.int64)
    total = 0.0
    comp = 0.0
    # The partial Fisher-Yates below never resets perm: a fresh prefix drawn
    # from any fixed arrangement is a uniform ordered tuple of distinct indices.
    for _ in range(r):
        acc = coeffs[0]
        prod = 1.0
        if sorted_order:
            for t in range(k):
                state, u = _below(state, s - t)
                u += t
                tmp = perm[t]
                perm[t] = perm[u]
                perm[u] = tmp
                chosen[t] = perm[t]
            chosen.sort()
            for t in range(d):
                prod *= z[chosen[t]]
                acc += coeffs[t + 1] * prod
        else:
            for t in range(d):
                state, u = _below(state, s - t)
                u += t
                tmp = perm[t]
                perm[t] = perm[u]
                perm[u] = tmp
                prod *= z[perm[t]]
                acc += coeffs[t + 1] * prod
        # Kahan-compensated sum over groups
        y = acc - comp
        tot = total + y
        comp = (tot - total) - y
        total = tot
    return total / r


def _kernel_seed(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, 2**63))
    return int(np.random.SeedSequence(int(seed) & ((1 << 64) - 1)).generate_state(1, dtype=np.uint64)[0])


def averaged_taylor(cfg: TaylorConfig, samples, seed, order: str = "random") -> float:
    """Mean of ``num_groups`` Taylor estimators on random k-tuples of a sample pool.

    Each group takes k distinct pool indices.  With ``order="random"`` the
    group's samples enter the product in a uniformly random order, so every
    pool element is equally likely to sit at every position.  ``order="sorted"``
    feeds them in ascending index order instead; the low-indexed pool elements
    then dominate the leading terms and the averaging gain is lost (kept for
    comparison only).
    """
    z = np.asarray(samples, dtype=float).ravel()
    k = cfg.degree
    if z.size < k:
        raise UsageError(f"pool of {z.size} samples is smaller than degree {k}")
    if order not in ("random", "sorted"):
        raise UsageError("order must be 'random' or 'sorted'")
    lam = float(cfg.anchor)
    z = (z - lam) / lam
    d = cfg.psi.effective_degree(k)
    coeffs = cfg.psi.coefficients(d)
    if z.size == 0:
        return float(coeffs[0] * lam ** cfg.psi.p)
    mean = _averaged_kernel(z, coeffs, k, cfg.num_groups, order == "sorted", np.uint64(_kernel_seed(seed)))
    return float(mean * lam ** cfg.psi.p)


SampleSource = Union[Callable[[], float], Iterable[float]]


def _as_iterator(source: SampleSource) -> Iterator[float]:
    if callable(source):
        def gen():
            while True:
                yield source()
        return gen()
    return iter(source)


def singh_estimate(psi: PowerFunction, lam: float, sample_source: SampleSource, seed,
                   n_cap: int = SINGH_CAP) -> float:
    """Geometric-index unbiased estimator 2^(N+1) a_N(lambda) prod_{l<=N} (X_l - lambda)."""
    if not lam > 0:
        raise ConfigError("anchor must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = min(int(rng.geometric(0.5)) - 1, n_cap)
    it = _as_iterator(sample_source)
    prod = 1.0
    for _ in range(n):
        try:
            x = next(it)
        except StopIteration:
            raise UsageError("sample source exhausted") from None
        prod *= (float(x) - lam) / lam
    return 2.0 ** (n + 1) * psi.coefficient(n) * prod * lam ** psi.p


def singh_batch(psi: PowerFunction, lam: float, draw: Callable, trials: int, seed,
                n_cap: int = SINGH_CAP) -> np.ndarray:
    """``trials`` independent Singh estimates; ``draw(rng, shape)`` returns i.i.d. samples."""
    rng = np.random.default_rng(seed)
    n = np.minimum(rng.geometric(0.5, size=trials) - 1, n_cap)
    width = int(n.max()) if trials else 0
    x = draw(rng, (trials, width)) if width else np.empty((trials, 0))
    z = (x - lam) / lam
    z[np.arange(width)[None, :] >= n[:, None]] = 1.0
    prod = np.prod(z, axis=1)
    coeffs = psi.coefficients(n_cap)
    return 2.0 ** (n + 1) * coeffs[n] * prod * lam ** psi.p


def analytic_mean(psi: PowerFunction, lam: float, mu: float, k: int) -> float:
    """Partial Taylor sum sum_{j<=k} a_j(lambda) (mu - lambda)^j = E[theta] for mean-mu samples.

    Accumulated in extended precision so the returned double is, in practice,
    the correctly rounded value; the truncation error can sit far below one ulp.
    """
    if not (lam > 0 and mu > 0):
        raise UsageError("lambda and mu must be positive")
    ld = np.longdouble
    lam_l = ld(lam)
    z = (ld(mu) - lam_l) / lam_l
    d = psi.effective_degree(k)
    p = ld(psi.p)
    # Horner on sum_j C(p, j) z^j with C(p, j+1) = C(p, j) (p - j) / (j + 1)
    coeffs = [ld(1)]
    for j in range(d):
        coeffs.append(coeffs[-1] * (p - j) / (j + 1))
    acc = ld(0)
    for c in reversed(coeffs):
        acc = acc * z + c
    return float(acc * lam_l ** p)


def remainder_bound(psi: PowerFunction, lam: float, mu: float, k: int) -> float:
    """|C(p,k+1)| * x^(p-k-1) * |mu - lambda|^(k+1) at the endpoint of [mu, lambda] maximizing x^(p-k-1)."""
    e = psi.p - k - 1
    x = max(mu, lam) if e >= 0 else min(mu, lam)
    return abs(gen_binomial(psi.p, k + 1)) * x ** e * abs(mu - lam) ** (k + 1)


@dataclass(frozen=True)
class EstimatorBounds:
    bias_bound: float
    var_single: float
    var_avg: float | None


def estimator_bounds(p: float, f: float, sigma: float, k: int, s: int, r: int) -> EstimatorBounds:
    """Bias and variance bounds for the (averaged) Taylor estimator of f^p.

    ``var_avg`` is None unless k >= 144 and s >= 16k, where the averaged bound holds.
    """
    if not f > 9 * p * sigma:
        raise BoundNotApplicable(f"needs f > 9 p sigma ({f} <= {9 * p * sigma})")
    if float(p).is_integer() and k + 1 >= p:
        bias = 0.0
    else:
        if k < 8:
            raise BoundNotApplicable("bias bound needs k >= 8")
        # smallest eps with k >= 4 ceil(log2(1/eps)) + 8
        eps = 2.0 ** -((k - 8) // 4)
        bias = 12.0 ** -8 * eps ** 12 * f ** p
    base = p * p * f ** (2 * p - 2) * sigma * sigma
    var_single = 3.0 * base
    var_avg = None
    if k >= 144 and s >= 16 * k:
        var_avg = base * (3.0 / r + (1.0 + 72.0 ** -10) / s)
    return EstimatorBounds(bias, var_single, var_avg)
