"""Exact reference values and the seeded Monte-Carlo trial harness.

Everything here uses Theta(n) space on purpose: it is the ground truth the
sketches are checked against.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import FpConfig, median_estimate, sketch_stream
from .errors import UsageError
from .hashing import NS_TRIAL, derived_seed
from .streams import Stream


@dataclass
class FrequencyVector:
    """Dense exact frequencies plus ingest statistics (updates seen and max |v|)."""

    n: int
    f: np.ndarray = None
    m: int = 0
    max_update: int = 0

    def __post_init__(self):
        if self.f is None:
            self.f = np.zeros(self.n, dtype=np.int64)

    def update(self, i: int, v: int):
        if not 0 <= i < self.n:
            raise UsageError(f"item {i} outside [0, {self.n})")
        self.f[i] += v
        self.m += 1
        self.max_update = max(self.max_update, abs(int(v)))

    def update_many(self, items, values):
        items = np.asarray(items, dtype=np.int64)
        values = np.asarray(values, dtype=np.int64)
        if items.size == 0:
            return
        if items.min() < 0 or items.max() >= self.n:
            raise UsageError(f"items outside [0, {self.n})")
        np.add.at(self.f, items, values)
        self.m += int(items.size)
        self.max_update = max(self.max_update, int(np.abs(values).max()))

    @classmethod
    def from_stream(cls, stream: Stream) -> "FrequencyVector":
        fv = cls(stream.n)
        fv.update_many(stream.items, stream.values)
        return fv

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.f)


def exact_moment(fv: FrequencyVector, p: float) -> float:
    """sum |f_i|^p with long-double accumulation."""
    if not p > 0:
        raise UsageError("p must be positive")
    a = np.abs(fv.f[fv.f != 0]).astype(np.longdouble)
    if a.size == 0:
        return 0.0
    return float(np.sum(a ** np.longdouble(p), dtype=np.longdouble))


def exact_heavy(fv: FrequencyVector, scalers, T: float) -> np.ndarray:
    """Items with |f_i * y_i| >= T, for scalers y indexed by item."""
    y = np.asarray(scalers, dtype=float)
    if y.shape != fv.f.shape:
        raise UsageError("need one scaler per item")
    g = np.abs(fv.f.astype(float) * y)
    return np.flatnonzero((g >= T) & (fv.f != 0))


@dataclass
class Exact:
    fp: float
    f2: float
    fv: FrequencyVector


@dataclass
class TrialSummary:
    trials: int
    successes: int
    mean: float
    variance: float
    nc_failures: int
    exact_fp: float
    thetas: list[float] = field(default_factory=list)
    passed: list[bool] = field(default_factory=list)
    seconds: float = field(default=0.0, compare=False)

    @property
    def rate(self) -> float:
        return self.successes / self.trials

    @property
    def mean_rel_error(self) -> float:
        if self.exact_fp == 0:
            return float("nan")
        return float(np.mean(np.abs(np.array(self.thetas) - self.exact_fp))) / self.exact_fp

    @property
    def success_mean(self) -> float:
        """Mean Theta over the trials that satisfied the predicate."""
        ok = [t for t, h in zip(self.thetas, self.passed) if h]
        return float(np.mean(ok)) if ok else float("nan")

    def fields(self) -> dict:
        return {
            "trials": self.trials,
            "successes": self.successes,
            "success_rate": self.rate,
            "mean": self.mean,
            "variance": self.variance,
            "nc_failures": self.nc_failures,
            "exact_Fp": self.exact_fp,
            "mean_rel_error": self.mean_rel_error,
            "wall_seconds": round(self.seconds, 3),
        }

    def to_text(self) -> str:
        return "\n".join(f"{k}: {v}" for k, v in self.fields().items())

    def to_json(self) -> str:
        return json.dumps({**self.fields(), "thetas": self.thetas}, sort_keys=True)


def trial_seed(master_seed: int, trial: int) -> int:
    return derived_seed(master_seed, NS_TRIAL, trial)


def relative_error_within(eps: float) -> Callable:
    """Predicate |Theta - F_p| <= eps * F_p."""
    def pred(theta, trace, exact: Exact) -> bool:
        return abs(theta - exact.fp) <= eps * exact.fp
    return pred


def always(theta, trace, exact) -> bool:
    return True


def run_trials(stream: Stream, config: FpConfig, trials: int, predicate: Callable = always,
               copies: int = 1) -> TrialSummary:
    """Run ``trials`` independently seeded sketches of ``stream`` and score each with ``predicate``.

    Trial t uses master seed ``trial_seed(config.master_seed, t)``.  With
    ``copies > 1`` each trial is a median over that many copies and the
    predicate receives the :class:`MedianResult` as its trace.
    """
    if trials < 1:
        raise UsageError("trials must be at least 1")
    fv = FrequencyVector.from_stream(stream)
    exact = Exact(exact_moment(fv, config.p), exact_moment(fv, 2), fv)
    thetas, passed, nc = [], [], 0
    start = time.perf_counter()
    for t in range(trials):
        cfg = config.with_seed(trial_seed(config.master_seed, t))
        if copies == 1:
            theta, trace = sketch_stream(cfg, stream.items, stream.values).query()
            failed = trace.nc_failed
        else:
            trace = median_estimate(cfg, stream.items, stream.values, copies)
            theta, failed = trace.theta, trace.failed
        thetas.append(float(theta))
        nc += bool(failed)
        passed.append(bool(predicate(theta, trace, exact)))
    arr = np.array(thetas)
    var = float(arr.var(ddof=1)) if trials > 1 else 0.0
    return TrialSummary(trials, sum(passed), float(arr.mean()), var, nc, exact.fp, thetas, passed,
                        time.perf_counter() - start)
