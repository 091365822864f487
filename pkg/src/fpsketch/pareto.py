"""Truncated Pareto scaling law on [1, R] with density A * y^-(p+1).

Scalers are stored in fixed point with ``frac_bits`` fractional bits; the
integer ``scaled_int`` form (y * 2^q) is what the sketches multiply into
their counters, so ingestion never rounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UsageError
from .hashing import MERSENNE_61, HashFamily, eval_index

_TWO_M53 = 2.0 ** -53


def default_frac_bits(n: int) -> int:
    return math.ceil(math.log2(n)) + 4


@dataclass(frozen=True)
class YDistribution:
    p: float
    n: int
    frac_bits: int
    R: float = field(init=False)
    A: float = field(init=False)

    def __post_init__(self):
        if not self.p > 0:
            raise ConfigError("p must be positive")
        if self.n < 2:
            raise ConfigError("domain size n must be at least 2")
        R = float(self.n) ** (4.0 / self.p)
        object.__setattr__(self, "R", R)
        # -expm1(-p ln R) = 1 - R^-p without cancellation
        object.__setattr__(self, "A", self.p / -math.expm1(-self.p * math.log(R)))

    @classmethod
    def for_domain(cls, p: float, n: int, frac_bits: int | None = None) -> "YDistribution":
        return cls(float(p), int(n), default_frac_bits(n) if frac_bits is None else int(frac_bits))

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def max_scaled_int(self) -> int:
        return int(math.floor(self.R * self.scale))

    def cdf(self, y):
        """Continuous CDF (A/p)(1 - y^-p) on [1, R]."""
        y = np.clip(np.asarray(y, dtype=float), 1.0, self.R)
        out = (self.A / self.p) * -np.expm1(-self.p * np.log(y))
        return float(out) if out.ndim == 0 else out

    def scaled_int(self, u):
        """Fixed-point scaler floor(y * 2^q) for uniform draw(s) ``u``."""
        arr = np.asarray(u, dtype=float)
        if arr.size and (arr.min() < 0.0 or arr.max() >= 1.0):
            raise UsageError("u must lie in [0, 1)")
        # 1 - u p/A = (1 - u) + u R^-p; this form keeps full precision as u -> 1
        r_p = self.R ** -self.p
        base = np.maximum((1.0 - arr) + arr * r_p, r_p)
        y = base ** (-1.0 / self.p)
        scaled = np.floor(y * self.scale)
        scaled = np.clip(scaled, self.scale, self.max_scaled_int).astype(np.int64)
        return int(scaled) if scaled.ndim == 0 else scaled


def sample_at(d: YDistribution, u):
    """Inverse-CDF scaler, rounded down to a multiple of 2^-q and clamped to [1, R]."""
    s = d.scaled_int(u)
    if isinstance(s, int):
        return s / d.scale
    return s.astype(float) / d.scale


def tail_prob(d: YDistribution, t):
    """Pr[y >= t] under the continuous law; t below 1 is treated as 1."""
    t = np.maximum(np.asarray(t, dtype=float), 1.0)
    out = np.where(
        t >= d.R,
        0.0,
        (d.A / d.p) * (t ** -d.p - d.R ** -d.p),
    )
    out = np.where(t == 1.0, 1.0, out)
    return float(out) if out.ndim == 0 else out


def second_moment(d: YDistribution) -> float:
    """E[y^2] = A (1 - R^-(p-2)) / (p - 2)."""
    if not d.p > 2:
        raise ConfigError("E[y^2] is finite only for p > 2")
    return d.A * -math.expm1(-(d.p - 2) * math.log(d.R)) / (d.p - 2)


def uniform_from_field(x):
    """Map field values in [0, 2^61-1) to [0, 1) using their top 53 bits."""
    if isinstance(x, int):
        return (x >> 8) * _TWO_M53
    return (np.asarray(x, dtype=np.uint64) >> np.uint64(8)).astype(float) * _TWO_M53


def _check_scaler_hash(h: HashFamily):
    if h.independence != 2 or h.range < MERSENNE_61:
        raise UsageError("scaler hash must be pairwise with range >= 2^61-1 (use range 2^64)")


def y_for_item(d: YDistribution, h: HashFamily, i):
    """Pairwise-independent scaler y_i for item(s) ``i``."""
    _check_scaler_hash(h)
    return sample_at(d, uniform_from_field(eval_index(h, i)))


def scaled_ints_for_items(d: YDistribution, h: HashFamily, items) -> np.ndarray:
    """Fixed-point form of :func:`y_for_item` for an array of items."""
    _check_scaler_hash(h)
    return d.scaled_int(uniform_from_field(eval_index(h, np.asarray(items))))
