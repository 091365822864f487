"""Composite F_p sketch: scaled CountSketches, an F_2 sketch, and the query path.

Each update (i, v) enters the heavy-hitter sketch ``hh`` and the Taylor-sample
sketch ``tpest`` as (i, v * y_i), where y_i is the item's Pareto scaler, and
the F_2 sketch as (i, v).  A query finds the items whose scaled frequency
crosses a threshold, keeps item i with the probability Pr[y >= 2^(l_i/2)] set
by its estimated level, estimates |f_i|^p from the non-colliding TPEst cells
with the averaged Taylor estimator, and sums the estimates reweighted by the
inverse keep probability.
"""

from __future__ import annotations

import json
import math
import statistics
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .countsketch import CountSketch, HeavyReport, heavy_candidates, merge as merge_sketch, non_collision_map
from .errors import ConfigError, UsageError
from .hashing import KIND_INDEX, MASK_64, NS_COPY, NS_QUERY, NS_SCALER, derived_seed, make_family, stream_id
from .pareto import YDistribution, scaled_ints_for_items, second_moment, tail_prob
from .taylor import PowerFunction, TaylorConfig, averaged_taylor

F2_TOLERANCE = 1.0 / 256
DEFAULT_F2_WIDTH = 8 * 256 * 256
DEFAULT_F2_GROUPS = 9
# T_hat = sqrt((1 + tol) / (1 - tol)) * sqrt(16 E[y^2] F2_hat / B) lands in [T_g, 65 T_g / 64]
T_HAT_INFLATION = math.sqrt((1 + F2_TOLERANCE) / (1 - F2_TOLERANCE))


def _ceil(x: float) -> int:
    # guard against 4.000000000001 from scale arithmetic
    return math.ceil(round(x, 9))


@dataclass(frozen=True)
class FpConfig:
    n: int
    p: float
    epsilon: float
    master_seed: int
    scale_b: float
    scale_s: float
    scale_k: float
    scale_r: float
    f2_width: int
    f2_groups: int
    R: float
    A: float
    y_second_moment: float
    frac_bits: int
    B: int
    C: int
    s: int
    k: int
    r: int

    @property
    def pool_size(self) -> int:
        return self.s // 2

    @property
    def averaged_bounds_apply(self) -> bool:
        """Averaged-variance bounds need a pool of at least 16k readings."""
        return self.pool_size >= 16 * self.k

    @property
    def cutoff_factor(self) -> float:
        return self.epsilon ** (2.0 / self.p) / (4.0 * self.n)

    def counters(self) -> dict[str, int]:
        hh = tp = self.s * self.C
        f2 = self.f2_groups * self.f2_width
        return {"hh": hh, "tpest": tp, "f2": f2, "total": hh + tp + f2}

    def with_seed(self, seed: int) -> "FpConfig":
        return replace(self, master_seed=int(seed) & MASK_64)

    def to_dict(self) -> dict:
        return asdict(self)


def derive_params(n: int, p: float, epsilon: float, scale_b: float = 1.0, scale_s: float = 1.0,
                  scale_k: float = 1.0, scale_r: float = 1.0, master_seed: int = 0,
                  f2_width: int = DEFAULT_F2_WIDTH, f2_groups: int = DEFAULT_F2_GROUPS) -> FpConfig:
    """Sketch dimensions for domain ``n``, moment ``p`` and accuracy ``epsilon``."""
    n = int(n)
    p = float(p)
    if not p > 2:
        raise ConfigError(f"p must exceed 2 (got {p})")
    if n < 2:
        raise ConfigError(f"n must be at least 2 (got {n})")
    log_n = math.log2(n)
    if not p < log_n:
        raise ConfigError(f"p must be below log2(n) = {log_n:.3f} (got {p}); use the exact mode")
    lo = n ** (-1.0 / p)
    if not lo <= epsilon <= 1:
        raise ConfigError(f"epsilon must lie in [n^(-1/p), 1] = [{lo:.3g}, 1] (got {epsilon}); "
                          "use the exact mode")
    for name, v in (("scale_b", scale_b), ("scale_s", scale_s), ("scale_k", scale_k),
                    ("scale_r", scale_r)):
        if not v > 0:
            raise ConfigError(f"{name} must be positive")
    if f2_width < 1 or f2_groups < 1:
        raise ConfigError("F2 sketch dimensions must be positive")
    ydist = YDistribution.for_domain(p, n)
    ey2 = second_moment(ydist)
    base = max(4 * math.ceil(log_n) + 4, 144)
    s = _ceil(scale_s * 32 * base)
    k = _ceil(scale_k * base)
    r = _ceil(scale_r * 12 * s)
    denom = epsilon ** 2 * min(log_n, epsilon ** (4.0 / p - 2))
    B = _ceil(scale_b * 1000 * n ** (1 - 2.0 / p) * ey2 / denom)
    C = _ceil(121 * p * p * B)
    if s // 2 < k:
        raise ConfigError(f"pool s/2 = {s // 2} is smaller than the Taylor degree k = {k}")
    return FpConfig(n=n, p=p, epsilon=float(epsilon), master_seed=int(master_seed) & MASK_64,
                    scale_b=scale_b, scale_s=scale_s, scale_k=scale_k, scale_r=scale_r,
                    f2_width=int(f2_width), f2_groups=int(f2_groups), R=ydist.R, A=ydist.A,
                    y_second_moment=ey2, frac_bits=ydist.frac_bits, B=B, C=C, s=s, k=k, r=r)


def level_index(t_hat: float, f_hat: float) -> int:
    """max(0, ceil(2 log2(2 T_hat / f_hat))); the item is kept iff y >= 2^(l/2)."""
    if not (t_hat > 0 and f_hat > 0):
        raise UsageError("level_index needs positive arguments")
    return max(0, math.ceil(2.0 * math.log2(2.0 * t_hat / f_hat)))


def level_threshold(level: int) -> float:
    return 2.0 ** (level / 2.0)


@dataclass
class ItemRecord:
    item: int
    g_hat: float
    sign: int
    y: float
    f_hat: float
    level: int | None
    rho: float | None
    q_size: int
    in_h: bool
    included: bool
    theta_bar: float | None = None
    note: str = ""


@dataclass
class QueryTrace:
    f2_hat: float
    t_hat: float
    delta_g: float
    cutoff: float
    heavy: HeavyReport
    h_items: list[int]
    records: list[ItemRecord]
    theta: float
    nc_failed: bool

    def record(self, item: int) -> ItemRecord:
        for rec in self.records:
            if rec.item == item:
                return rec
        raise KeyError(item)

    def to_dict(self) -> dict:
        return {
            "F2_hat": self.f2_hat,
            "T_hat": self.t_hat,
            "Delta_g": self.delta_g,
            "cutoff": self.cutoff,
            "H_g": [int(i) for i in self.heavy.items],
            "H": list(self.h_items),
            "records": [asdict(r) for r in self.records],
            "Theta": self.theta,
            "nc_failed": self.nc_failed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_FP_MAGIC = b"FPS1"
_FP_HEADER = struct.Struct("<4sHI")


class FpSketch:
    def __init__(self, config: FpConfig):
        self.config = config
        seed = config.master_seed
        self.ydist = YDistribution.for_domain(config.p, config.n)
        self.scaler_hash = make_family(seed, stream_id(NS_SCALER, KIND_INDEX), 2, config.n, 1 << 64)
        q = self.ydist.frac_bits
        self.hh = CountSketch(config.s, config.C, config.n, seed, "hh", q)
        self.tpest = CountSketch(config.s, config.C, config.n, seed, "tpest", q)
        self.f2 = CountSketch(config.f2_groups, config.f2_width, config.n, seed, "f2", 0)

    def scaled_ints(self, items) -> np.ndarray:
        """Fixed-point scalers y_i * 2^q."""
        return scaled_ints_for_items(self.ydist, self.scaler_hash, items)

    def scalers(self, items) -> np.ndarray:
        return self.scaled_ints(items).astype(float) / self.ydist.scale

    def ingest(self, i: int, v: int):
        y = int(self.scaled_ints(np.array([i]))[0])
        self.hh.update(i, v * y)
        self.tpest.update(i, v * y)
        self.f2.update(i, v)

    def ingest_many(self, items, values):
        """Bulk ingestion; bit-identical to calling :meth:`ingest` per update."""
        items = np.asarray(items, dtype=np.int64)
        values = np.asarray(values, dtype=np.int64)
        if items.size == 0:
            return
        uniq, inv = np.unique(items, return_inverse=True)
        y = self.scaled_ints(uniq)[inv]
        if np.abs(values).max() > (1 << 63) // max(1, int(y.max())):
            raise UsageError("update magnitude too large for fixed-point scaling")
        scaled = values * y
        self.hh.update_many(items, scaled)
        self.tpest.update_many(items, scaled)
        self.f2.update_many(items, values)

    def estimate_f2(self) -> float:
        return estimate_f2(self)

    def query(self) -> tuple[float, QueryTrace]:
        return query(self)

    def to_bytes(self) -> bytes:
        cfg = json.dumps(self.config.to_dict(), sort_keys=True).encode()
        return (_FP_HEADER.pack(_FP_MAGIC, 1, len(cfg)) + cfg + self.hh.to_bytes()
                + self.tpest.to_bytes() + self.f2.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "FpSketch":
        magic, version, clen = _FP_HEADER.unpack_from(data)
        if magic != _FP_MAGIC or version != 1:
            raise UsageError("not an FpSketch blob of a supported version")
        off = _FP_HEADER.size
        cfg = FpConfig(**json.loads(data[off:off + clen]))
        off += clen
        out = cls(cfg)
        parts = []
        for _ in range(3):
            size = CountSketch.blob_size(data, off)
            parts.append(CountSketch.from_bytes(data[off:off + size]))
            off += size
        out.hh, out.tpest, out.f2 = parts
        return out


def ingest(sk: FpSketch, i: int, v: int):
    sk.ingest(i, v)


def merge(a: FpSketch, b: FpSketch) -> FpSketch:
    if a.config != b.config:
        raise UsageError("cannot merge FpSketches with different configurations")
    out = object.__new__(FpSketch)
    out.__dict__.update(a.__dict__)
    out.hh = merge_sketch(a.hh, b.hh)
    out.tpest = merge_sketch(a.tpest, b.tpest)
    out.f2 = merge_sketch(a.f2, b.f2)
    return out


def estimate_f2(sk: FpSketch) -> float:
    """Median over rows of the summed squared bucket counters."""
    rows = sk.f2.cells.astype(float)
    return float(statistics.median_low(float(np.dot(row, row)) for row in rows))


def _item_seed(master_seed: int, item: int) -> int:
    return derived_seed(master_seed, NS_QUERY, item)


def query(sk: FpSketch) -> tuple[float, QueryTrace]:
    cfg = sk.config
    p = cfg.p
    f2_hat = estimate_f2(sk)
    t_hat = T_HAT_INFLATION * math.sqrt(16.0 * cfg.y_second_moment * f2_hat / cfg.B)
    delta = t_hat / (11.0 * p)
    cutoff = math.sqrt(cfg.cutoff_factor * f2_hat)
    if t_hat == 0.0:
        empty = HeavyReport(items=np.empty(0, dtype=np.int64))
        return 0.0, QueryTrace(f2_hat, t_hat, delta, cutoff, empty, [], [], 0.0, False)

    heavy = heavy_candidates(sk.hh, t_hat, delta, cfg.n)
    hg = heavy.items
    y_int = sk.scaled_ints(hg) if hg.size else np.empty(0, dtype=np.int64)
    scale = sk.ydist.scale
    q_map = non_collision_map(sk.tpest, hg)
    records: list[ItemRecord] = []
    for j, i in enumerate(hg.tolist()):
        y = float(y_int[j] / scale)
        g_hat = heavy.estimates[i]
        f_hat = g_hat / y
        rec = ItemRecord(item=i, g_hat=g_hat, sign=heavy.signs[i], y=y, f_hat=f_hat, level=None,
                         rho=None, q_size=int(q_map[i].size), in_h=False, included=False)
        if f_hat > 0:
            rec.level = level_index(t_hat, f_hat)
            rec.rho = tail_prob(sk.ydist, level_threshold(rec.level))
            rec.in_h = bool(y >= level_threshold(rec.level))
        else:
            rec.note = "nonpositive f_hat"
        records.append(rec)

    h_items = [rec.item for rec in records if rec.in_h]
    if any(2 * rec.q_size < cfg.s for rec in records):
        for rec in records:
            if 2 * rec.q_size < cfg.s:
                rec.note = "fewer than s/2 non-colliding tables"
        return 0.0, QueryTrace(f2_hat, t_hat, delta, cutoff, heavy, h_items, records, 0.0, True)

    psi = PowerFunction(p)
    pool = cfg.pool_size
    theta = 0.0
    for j, rec in enumerate(records):
        if not rec.in_h:
            continue
        if not rec.f_hat > cutoff:
            rec.note = "below cutoff"
            continue
        tables = q_map[rec.item][:pool]
        # nu_il = T_l[h_l(i)] xi_l(i) sgn(g_i) / y_i, in real units on both sides
        readings = sk.tpest.readings(np.array([rec.item]))[tables, 0]
        nu = readings.astype(float) * rec.sign / float(y_int[j])
        tcfg = TaylorConfig(psi, rec.f_hat, cfg.k, cfg.r, pool)
        rec.theta_bar = averaged_taylor(tcfg, nu, _item_seed(cfg.master_seed, rec.item))
        rec.included = True
        theta += rec.theta_bar / rec.rho
    return theta, QueryTrace(f2_hat, t_hat, delta, cutoff, heavy, h_items, records, theta, False)


def copy_seed(master_seed: int, copy: int) -> int:
    """Seed of the ``copy``-th independent sketch; copy 0 keeps the master seed."""
    if copy == 0:
        return master_seed
    return derived_seed(master_seed, NS_COPY, copy)


@dataclass
class MedianResult:
    theta: float
    failed: bool
    thetas: list[float] = field(default_factory=list)
    nc_failed: list[bool] = field(default_factory=list)


def sketch_stream(config: FpConfig, items, values) -> FpSketch:
    sk = FpSketch(config)
    sk.ingest_many(items, values)
    return sk


def median_estimate(config: FpConfig, items, values, copies: int = 1) -> MedianResult:
    """Median of ``copies`` independent estimates, skipping copies whose NC check failed."""
    if copies < 1 or copies % 2 == 0:
        raise UsageError("copies must be a positive odd integer")
    thetas, failed = [], []
    for c in range(copies):
        sk = sketch_stream(config.with_seed(copy_seed(config.master_seed, c)), items, values)
        theta, trace = sk.query()
        thetas.append(theta)
        failed.append(trace.nc_failed)
        del sk
    ok = [t for t, f in zip(thetas, failed) if not f]
    if not ok:
        return MedianResult(0.0, True, thetas, failed)
    return MedianResult(float(statistics.median_low(ok)), False, thetas, failed)
