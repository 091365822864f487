"""CountSketch over fixed-point int64 counters.

Counters hold values in units of 2^-frac_bits.  Callers pass increments
already in counter units, so every update is exact integer arithmetic and
sketches of the same seed are bit-for-bit linear.

Roles fix the independence of the families and the seed namespace:

    "hh"     pairwise buckets, pairwise signs (heavy hitters)
    "tpest"  3-wise buckets, 4-wise signs (Taylor sample source)
    "f2"     pairwise buckets, 4-wise signs (bucketed tug-of-war rows)
    "plain"  pairwise buckets, pairwise signs, separate namespace
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, CounterOverflow, UsageError
from .hashing import (
    KIND_INDEX, KIND_SIGN, NS_F2, NS_HH, NS_PLAIN, NS_TPEST,
    eval_index, eval_sign, make_family, make_sign_family, stream_id,
)

ROLES = {
    "hh": (NS_HH, 2, 2),
    "tpest": (NS_TPEST, 3, 4),
    "f2": (NS_F2, 2, 4),
    "plain": (NS_PLAIN, 2, 2),
}
_ROLE_CODES = {"hh": 1, "tpest": 2, "plain": 3, "f2": 4}
_CODE_ROLES = {v: k for k, v in _ROLE_CODES.items()}

MAGIC = b"CSK1"
FORMAT_VERSION = 1
# magic, version, role, frac_bits, tables, buckets, domain, seed, mass
_HEADER = struct.Struct("<4sHBBIQQQQ")
_INT63 = (1 << 63) - 1
_CHUNK = 1 << 16


@dataclass
class HeavyReport:
    items: np.ndarray
    estimates: dict[int, float] = field(default_factory=dict)
    signs: dict[int, int] = field(default_factory=dict)
    threshold: float = 0.0
    error: float = 0.0

    def __contains__(self, i) -> bool:
        return int(i) in self.estimates

    def __len__(self) -> int:
        return len(self.items)


class CountSketch:
    def __init__(self, num_tables: int, num_buckets: int, domain: int, master_seed: int,
                 role: str = "plain", frac_bits: int = 0):
        if role not in ROLES:
            raise ConfigError(f"unknown role {role!r}")
        if num_tables < 1 or num_buckets < 1:
            raise ConfigError("num_tables and num_buckets must be positive")
        self.num_tables = int(num_tables)
        self.num_buckets = int(num_buckets)
        self.domain = int(domain)
        self.master_seed = int(master_seed) & ((1 << 64) - 1)
        self.role = role
        self.frac_bits = int(frac_bits)
        ns, th, ts = ROLES[role]
        self.hashes = [
            make_family(self.master_seed, stream_id(ns, KIND_INDEX, l), th, self.domain, self.num_buckets)
            for l in range(self.num_tables)
        ]
        self.signs = [
            make_sign_family(self.master_seed, stream_id(ns, KIND_SIGN, l), ts, self.domain)
            for l in range(self.num_tables)
        ]
        self.cells = np.zeros((self.num_tables, self.num_buckets), dtype=np.int64)
        # running sum of |increments|; bounds every |cell|
        self.mass = 0

    @property
    def num_counters(self) -> int:
        return self.num_tables * self.num_buckets

    def _charge(self, amount: int):
        mass = self.mass + amount
        if mass > _INT63:
            raise CounterOverflow("counter mass exceeds the signed 64-bit range")
        self.mass = mass

    def buckets(self, items) -> np.ndarray:
        """(num_tables, len(items)) bucket matrix."""
        items = np.asarray(items)
        return np.stack([eval_index(h, items) for h in self.hashes]) if items.size else \
            np.empty((self.num_tables, 0), dtype=np.int64)

    def sign_matrix(self, items) -> np.ndarray:
        items = np.asarray(items)
        return np.stack([eval_sign(g, items) for g in self.signs]) if items.size else \
            np.empty((self.num_tables, 0), dtype=np.int64)

    def update(self, i: int, v: int):
        """Add ``v`` counter units for item ``i`` to one bucket per table."""
        v = int(v)
        self._charge(abs(v))
        for l in range(self.num_tables):
            self.cells[l, eval_index(self.hashes[l], i)] += v * eval_sign(self.signs[l], i)

    def update_many(self, items, values):
        """Apply many updates at once; identical cells to sequential ``update`` calls."""
        items = np.asarray(items, dtype=np.int64)
        values = np.asarray(values, dtype=np.int64)
        if items.shape != values.shape:
            raise UsageError("items and values must have the same shape")
        if items.size == 0:
            return
        if items.min() < 0 or items.max() >= self.domain:
            raise UsageError(f"items outside domain [0, {self.domain})")
        self._charge(sum(map(abs, values.tolist())))
        uniq, inv = np.unique(items, return_inverse=True)
        agg = np.zeros(uniq.size, dtype=np.int64)
        np.add.at(agg, inv, values)
        nz = agg != 0
        uniq, agg = uniq[nz], agg[nz]
        for l in range(self.num_tables):
            b = eval_index(self.hashes[l], uniq)
            sg = eval_sign(self.signs[l], uniq)
            np.add.at(self.cells[l], b, agg * sg)

    def readings(self, items) -> np.ndarray:
        """(num_tables, len(items)) signed per-table estimates in counter units."""
        items = np.asarray(items)
        out = np.empty((self.num_tables, items.size), dtype=np.int64)
        for l in range(self.num_tables):
            out[l] = self.cells[l, eval_index(self.hashes[l], items)] * eval_sign(self.signs[l], items)
        return out

    def point_estimates(self, items) -> np.ndarray:
        """Lower median over tables, in real units."""
        r = np.sort(self.readings(items), axis=0)
        return r[(self.num_tables - 1) // 2].astype(float) / (1 << self.frac_bits)

    def raw_cell(self, l: int, b: int) -> int:
        if not (0 <= l < self.num_tables and 0 <= b < self.num_buckets):
            raise UsageError(f"cell ({l}, {b}) out of range")
        return int(self.cells[l, b])

    def compatible(self, other: "CountSketch") -> bool:
        return (self.num_tables, self.num_buckets, self.domain, self.master_seed, self.role,
                self.frac_bits) == (other.num_tables, other.num_buckets, other.domain,
                                    other.master_seed, other.role, other.frac_bits)

    def copy(self) -> "CountSketch":
        out = object.__new__(CountSketch)
        out.__dict__.update(self.__dict__)
        out.cells = self.cells.copy()
        return out

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, FORMAT_VERSION, _ROLE_CODES[self.role], self.frac_bits,
                              self.num_tables, self.num_buckets, self.domain, self.master_seed,
                              self.mass)
        return header + self.cells.astype("<i8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CountSketch":
        if len(data) < _HEADER.size:
            raise UsageError("truncated CountSketch blob")
        magic, version, role, q, s, c, domain, seed, mass = _HEADER.unpack_from(data)
        if magic != MAGIC or version != FORMAT_VERSION:
            raise UsageError("not a CountSketch blob of a supported version")
        body = data[_HEADER.size:]
        if len(body) != 8 * s * c:
            raise UsageError("CountSketch blob has the wrong length")
        out = cls(s, c, domain, seed, _CODE_ROLES[role], q)
        out.cells = np.frombuffer(body, dtype="<i8").astype(np.int64).reshape(s, c)
        out.mass = mass
        return out

    @staticmethod
    def blob_size(data: bytes, offset: int = 0) -> int:
        _, _, _, _, s, c, _, _, _ = _HEADER.unpack_from(data, offset)
        return _HEADER.size + 8 * s * c


def update(sk: CountSketch, i: int, v: int):
    sk.update(i, v)


def point_estimate(sk: CountSketch, i: int) -> float:
    return float(sk.point_estimates(np.array([i]))[0])


def raw_cell(sk: CountSketch, l: int, b: int) -> int:
    return sk.raw_cell(l, b)


def heavy_candidates(sk: CountSketch, threshold: float, error: float, n: int | None = None) -> HeavyReport:
    """Every item whose |point estimate| reaches ``threshold - error``, by full enumeration of [n]."""
    if not threshold > error > 0:
        raise UsageError("need threshold > error > 0")
    n = sk.domain if n is None else int(n)
    cut = threshold - error
    found, ests = [], []
    for start in range(0, n, _CHUNK):
        items = np.arange(start, min(n, start + _CHUNK))
        est = sk.point_estimates(items)
        hit = np.abs(est) >= cut
        found.append(items[hit])
        ests.append(est[hit])
    items = np.concatenate(found) if found else np.empty(0, dtype=np.int64)
    est = np.concatenate(ests) if ests else np.empty(0)
    return HeavyReport(
        items=items,
        estimates={int(i): float(abs(e)) for i, e in zip(items, est)},
        signs={int(i): (1 if e >= 0 else -1) for i, e in zip(items, est)},
        threshold=float(threshold),
        error=float(error),
    )


def non_collision_tables(sk: CountSketch, i: int, heavy) -> np.ndarray:
    """Tables where ``i`` shares its bucket with no other member of ``heavy``."""
    heavy = np.unique(np.asarray(list(heavy) if not isinstance(heavy, np.ndarray) else heavy,
                                 dtype=np.int64))
    pos = np.searchsorted(heavy, i)
    if pos >= heavy.size or heavy[pos] != i:
        raise UsageError(f"item {i} is not in the heavy set")
    return non_collision_map(sk, heavy)[int(i)]


def non_collision_map(sk: CountSketch, heavy) -> dict[int, np.ndarray]:
    """Q(i) for every i in ``heavy`` at once."""
    heavy = np.unique(np.asarray(heavy, dtype=np.int64))
    if heavy.size == 0:
        return {}
    b = sk.buckets(heavy)
    free = np.empty_like(b, dtype=bool)
    for l in range(sk.num_tables):
        _, inv, counts = np.unique(b[l], return_inverse=True, return_counts=True)
        free[l] = counts[inv] == 1
    return {int(item): np.flatnonzero(free[:, j]) for j, item in enumerate(heavy)}


def merge(a: CountSketch, b: CountSketch) -> CountSketch:
    """Cellwise sum of two sketches built with identical parameters and seed."""
    if not a.compatible(b):
        raise UsageError("cannot merge sketches with different parameters or seeds")
    out = a.copy()
    out._charge(b.mass)
    out.cells = a.cells + b.cells
    return out
