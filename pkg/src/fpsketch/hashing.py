"""t-wise independent hash and sign families over the Mersenne field GF(2^61 - 1).

A family is a random polynomial of degree t-1 with coefficients drawn
uniformly from the field; evaluating it at t distinct points gives t
independent uniform field elements.  Buckets are the field value reduced
modulo the range, so the per-bucket probability deviates from 1/range by at
most range/P (below 2^-45 for any range up to 2^16).  Signs are the parity
of the field value mapped to +1 (even) / -1 (odd).

Coefficients come from ``numpy.random.SeedSequence(master_seed,
spawn_key=(stream_id,))``: SeedSequence hashes its entropy and spawn key
through a 32-bit multiply-xorshift mixing pool, so one master seed
reproduces every family while distinct stream ids give unrelated streams.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, UsageError

MERSENNE_61 = (1 << 61) - 1
MASK_64 = (1 << 64) - 1

_P = np.uint64(MERSENNE_61)
_M30 = np.uint64((1 << 30) - 1)
_M31 = np.uint64((1 << 31) - 1)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_S61 = np.uint64(61)
_ONE = np.uint64(1)

# Namespaces for stream ids; one structure never reuses another's ids.
NS_SCALER = 1
NS_HH = 2
NS_TPEST = 3
NS_F2 = 4
NS_QUERY = 5
NS_COPY = 6
NS_PLAIN = 7
NS_TRIAL = 8

KIND_INDEX = 0
KIND_SIGN = 1


def stream_id(namespace: int, kind: int, index: int = 0) -> int:
    """Pack (namespace, kind, index) into one non-negative stream id."""
    return (namespace << 40) | (kind << 32) | index


def derived_seed(master_seed: int, namespace: int, index: int) -> int:
    """64-bit seed for the ``index``-th child of ``master_seed`` in ``namespace``."""
    ss = np.random.SeedSequence(int(master_seed) & MASK_64, spawn_key=(stream_id(namespace, 0, int(index)),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _reduce(x):
    """Partially reduced uint64 values (< 2^64) to [0, P)."""
    x = (x & _P) + (x >> _S61)
    x = (x & _P) + (x >> _S61)
    return np.where(x >= _P, x - _P, x)


def mulmod61(a, b):
    """Elementwise a*b mod 2^61-1 for uint64 arrays with entries < 2^61-1.

    Splits both operands at bit 31 so every partial product fits in 64 bits:
    a*b = hh*2^62 + mid*2^31 + ll with 2^62 = 2 and 2^61 = 1 (mod P).
    """
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    a_hi, a_lo = a >> _S31, a & _M31
    b_hi, b_lo = b >> _S31, b & _M31
    hh = a_hi * b_hi
    mid = a_hi * b_lo + a_lo * b_hi
    ll = a_lo * b_lo
    total = (hh << _ONE) + (mid >> _S30) + ((mid & _M30) << _S31) + ll
    return _reduce(total)


def _field_coefficients(master_seed: int, sid: int, t: int) -> tuple[int, ...]:
    ss = np.random.SeedSequence(int(master_seed) & MASK_64, spawn_key=(int(sid),))
    words = ss.generate_state(t + 4, dtype=np.uint64)
    # low 61 bits; the lone out-of-field value 2^61-1 is rejected
    out = [w for w in (int(x) & MERSENNE_61 for x in words) if w < MERSENNE_61]
    return tuple(out[:t])


def _poly_scalar(coeffs: tuple[int, ...], x: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % MERSENNE_61
    return acc


def _poly_array(coeffs: tuple[int, ...], x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.uint64)
    acc = np.full(x.shape, coeffs[-1], dtype=np.uint64)
    for c in reversed(coeffs[:-1]):
        acc = _reduce(mulmod61(acc, x) + np.uint64(c))
    return acc


def _check_items(i, domain: int):
    if np.isscalar(i) or isinstance(i, int):
        ii = int(i)
        if not 0 <= ii < domain:
            raise UsageError(f"item {ii} outside domain [0, {domain})")
        return ii
    arr = np.asarray(i)
    if arr.size and (arr.min() < 0 or arr.max() >= domain):
        raise UsageError(f"items outside domain [0, {domain})")
    return arr.astype(np.uint64)


@dataclass(frozen=True)
class HashFamily:
    """Degree-(t-1) polynomial over GF(2^61-1), reduced modulo ``range``."""

    seed: int
    independence: int
    domain_size: int
    range: int
    coefficients: tuple[int, ...]

    def field_value(self, i):
        """Raw field element in [0, P) for item(s) ``i``."""
        x = _check_items(i, self.domain_size)
        if isinstance(x, int):
            return _poly_scalar(self.coefficients, x)
        return _poly_array(self.coefficients, x)

    def __call__(self, i):
        return eval_index(self, i)


@dataclass(frozen=True)
class SignFamily:
    """Rademacher family: parity of a degree-(t-1) field polynomial."""

    seed: int
    independence: int
    domain_size: int
    coefficients: tuple[int, ...]

    def __call__(self, i):
        return eval_sign(self, i)


def make_family(master_seed: int, stream_id: int, t: int, domain: int, range: int) -> HashFamily:
    """Build a t-wise independent bucket family reproducible from ``(master_seed, stream_id)``."""
    if t not in (2, 3, 4):
        raise ConfigError(f"hash independence must be 2, 3 or 4, got {t}")
    if domain < 1:
        raise ConfigError("hash domain must be positive")
    if domain > MERSENNE_61:
        raise ConfigError(f"domain {domain} exceeds the field size 2^61-1")
    if range < 1:
        raise ConfigError("hash range must be positive")
    coeffs = _field_coefficients(master_seed, stream_id, t)
    return HashFamily(int(master_seed) & MASK_64, t, int(domain), int(range), coeffs)


def make_sign_family(master_seed: int, stream_id: int, t: int, domain: int) -> SignFamily:
    """Build a t-wise independent +/-1 family."""
    if t not in (2, 4):
        raise ConfigError(f"sign independence must be 2 or 4, got {t}")
    if domain < 1:
        raise ConfigError("sign domain must be positive")
    if domain > MERSENNE_61:
        raise ConfigError(f"domain {domain} exceeds the field size 2^61-1")
    coeffs = _field_coefficients(master_seed, stream_id, t)
    return SignFamily(int(master_seed) & MASK_64, t, int(domain), coeffs)


def eval_index(f: HashFamily, i):
    """Bucket of item(s) ``i`` in ``[0, f.range)``; scalar in, int out; array in, int64 array out."""
    v = f.field_value(i)
    if isinstance(v, int):
        return v % f.range if f.range < MERSENNE_61 else v
    if f.range >= MERSENNE_61:
        return v
    return (v % np.uint64(f.range)).astype(np.int64)


def eval_sign(f: SignFamily, i):
    """+1 or -1 for item(s) ``i``."""
    x = _check_items(i, f.domain_size)
    if isinstance(x, int):
        return 1 - 2 * (_poly_scalar(f.coefficients, x) & 1)
    v = _poly_array(f.coefficients, x)
    return 1 - 2 * (v & _ONE).astype(np.int64)
