"""Synthetic turnstile streams and the plain-text stream file format.

A stream file holds one update per line as ``"i v"`` in ASCII decimal.
Item indices are 0-based.  Lines starting with ``#`` are comments; the
header comment ``# n=<n> M=<M> m=<m>`` records the domain size, the bound
on |v| and the number of updates.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import UsageError

DISTRIBUTIONS = ("zipf", "uniform", "single-heavy")
FORMAT_LINE = "# fpsketch stream v1; item indices are 0-based"
_HEADER_RE = re.compile(r"^#\s*n=(\d+)\s+M=(\d+)(?:\s+m=(\d+))?\s*$")


class StreamFormatError(UsageError):
    """Malformed stream file; ``line`` is the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Stream:
    items: np.ndarray
    values: np.ndarray
    n: int
    max_update: int

    def __post_init__(self):
        self.items = np.asarray(self.items, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.items.shape != self.values.shape or self.items.ndim != 1:
            raise UsageError("items and values must be 1-d arrays of equal length")

    def __len__(self) -> int:
        return int(self.items.size)

    def tally(self) -> np.ndarray:
        """Exact frequency vector as int64."""
        out = np.zeros(self.n, dtype=np.int64)
        np.add.at(out, self.items, self.values)
        return out

    def split(self, at: int) -> tuple["Stream", "Stream"]:
        return (Stream(self.items[:at], self.values[:at], self.n, self.max_update),
                Stream(self.items[at:], self.values[at:], self.n, self.max_update))


def zipf_weights(n: int, alpha: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=float) ** -float(alpha)
    return w / w.sum()


def _values(rng, m: int, max_update: int) -> np.ndarray:
    if max_update == 1:
        return np.ones(m, dtype=np.int64)
    return rng.integers(1, max_update + 1, size=m, dtype=np.int64)


def generate(dist: str, n: int, m: int, seed: int, alpha: float = 1.1, max_update: int = 1) -> Stream:
    """Seeded synthetic stream; values are drawn uniformly from [1, max_update].

    zipf: item i (rank i + 1) with probability proportional to (i + 1)^-alpha.
    uniform: items uniform on [0, n).
    single-heavy: half of the updates hit item 0, the rest are uniform on [1, n).
    """
    if dist not in DISTRIBUTIONS:
        raise UsageError(f"unknown distribution {dist!r}; choose from {', '.join(DISTRIBUTIONS)}")
    if n < 1 or m < 0 or max_update < 1:
        raise UsageError("need n >= 1, m >= 0 and max_update >= 1")
    rng = np.random.default_rng(seed)
    if dist == "zipf":
        if not alpha > 0:
            raise UsageError("zipf exponent must be positive")
        items = rng.choice(n, size=m, p=zipf_weights(n, alpha))
    elif dist == "uniform":
        items = rng.integers(0, n, size=m)
    else:
        if n < 2:
            raise UsageError("single-heavy needs n >= 2")
        items = rng.integers(1, n, size=m)
        items[: m // 2] = 0
        rng.shuffle(items)
    return Stream(items.astype(np.int64), _values(rng, m, max_update), n, max_update)


def write_stream(stream: Stream, path) -> None:
    """Write ``stream`` to ``path``; raises OSError if the path is unwritable."""
    lines = [FORMAT_LINE, f"# n={stream.n} M={stream.max_update} m={len(stream)}"]
    body = "\n".join(f"{i} {v}" for i, v in zip(stream.items.tolist(), stream.values.tolist()))
    with open(os.fspath(path), "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
        if body:
            fh.write(body + "\n")


def parse_stream(text: str, n: int | None = None, max_update: int | None = None) -> Stream:
    """Parse stream text, rejecting the first malformed line.

    ``n`` and ``max_update`` default to the header values; one of the two
    sources must supply them.
    """
    items, values = [], []
    header_n = header_m = None
    lines = text.splitlines()
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            hm = _HEADER_RE.match(line)
            if hm:
                header_n, header_m = int(hm.group(1)), int(hm.group(2))
            continue
        if n is None:
            n = header_n
        if max_update is None:
            max_update = header_m
        if n is None:
            raise StreamFormatError(lineno, "domain size unknown (no '# n=... M=...' header and no --n)")
        parts = line.split()
        if len(parts) != 2:
            raise StreamFormatError(lineno, f"expected 'i v', got {raw!r}")
        try:
            i, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise StreamFormatError(lineno, f"non-integer field in {raw!r}") from None
        if not 0 <= i < n:
            raise StreamFormatError(lineno, f"item {i} outside [0, {n})")
        if max_update is not None and abs(v) > max_update:
            raise StreamFormatError(lineno, f"|v| = {abs(v)} exceeds M = {max_update}")
        items.append(i)
        values.append(v)
    n = header_n if n is None else n
    if n is None:
        raise UsageError("domain size unknown (no header and no n given)")
    if max_update is None:
        max_update = header_m if header_m is not None else max((abs(v) for v in values), default=1)
    return Stream(np.array(items, dtype=np.int64), np.array(values, dtype=np.int64), int(n), int(max_update))


def read_stream(path, n: int | None = None, max_update: int | None = None) -> Stream:
    with open(os.fspath(path), encoding="ascii") as fh:
        return parse_stream(fh.read(), n, max_update)
