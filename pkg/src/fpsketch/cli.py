"""Command-line entry points: generate, estimate, benchmark.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__
from .core import DEFAULT_F2_GROUPS, DEFAULT_F2_WIDTH, FpConfig, derive_params, median_estimate
from .errors import ConfigError, CounterOverflow, FpSketchError, UsageError
from .oracle import FrequencyVector, exact_moment, relative_error_within, run_trials
from .streams import DISTRIBUTIONS, Stream, generate, read_stream, write_stream

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INTERNAL = 0, 1, 2, 3
WORD_BYTES = 8
DEFAULT_MAX_COUNTERS = 50_000_000


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--n", type=int, help="domain size (default: stream header)")
    p.add_argument("--p", type=float, default=3.0, help="moment order, p > 2")
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0, help="master seed; the only source of randomness")
    p.add_argument("--copies", type=int, default=1, help="odd number of independent copies for the median")
    for name in ("b", "s", "k", "r"):
        p.add_argument(f"--scale-{name}", type=float, default=1.0,
                       help=f"multiplier on the default {name.upper() if name == 'b' else name}")
    p.add_argument("--f2-width", type=int, default=DEFAULT_F2_WIDTH, help="buckets per F2 row")
    p.add_argument("--f2-groups", type=int, default=DEFAULT_F2_GROUPS, help="F2 rows (median taken over rows)")
    p.add_argument("--max-counters", type=int, default=DEFAULT_MAX_COUNTERS,
                   help="refuse configurations with more counters than this")
    p.add_argument("--out", help="also write the report to this file")
    p.add_argument("--json", dest="json_path", help="write a single-object JSON dump to this file")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fpsketch", description="F_p moment sketching for turnstile streams")
    ap.add_argument("--version", action="version", version=f"fpsketch {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic stream file")
    g.add_argument("--dist", choices=DISTRIBUTIONS, default="zipf")
    g.add_argument("--alpha", type=float, default=1.1, help="zipf exponent")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--m", type=int, required=True, help="number of updates")
    g.add_argument("--max-update", type=int, default=1, help="values drawn from [1, M]")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="stream file path")

    e = sub.add_parser("estimate", help="sketch a stream file and report the F_p estimate")
    e.add_argument("--stream", required=True)
    e.add_argument("--with-oracle", action="store_true", help="also report exact F_p and the relative error")
    e.add_argument("--exact", action="store_true", help="skip sketching; report the exact F_p")
    _add_config_flags(e)

    b = sub.add_parser("benchmark", help="repeat the estimate over seeded trials")
    b.add_argument("--stream", help="stream file; otherwise one is generated from --dist etc.")
    b.add_argument("--dist", choices=DISTRIBUTIONS, default="zipf")
    b.add_argument("--alpha", type=float, default=1.1)
    b.add_argument("--m", type=int, default=10**6)
    b.add_argument("--max-update", type=int, default=1)
    b.add_argument("--trials", type=int, default=10)
    _add_config_flags(b)
    return ap


def _config(args, n: int) -> FpConfig:
    cfg = derive_params(n, args.p, args.epsilon, scale_b=args.scale_b, scale_s=args.scale_s,
                        scale_k=args.scale_k, scale_r=args.scale_r, master_seed=args.seed,
                        f2_width=args.f2_width, f2_groups=args.f2_groups)
    total = cfg.counters()["total"]
    if total > args.max_counters:
        raise ConfigError(f"counter budget: configuration needs {total} counters, over --max-counters "
                          f"{args.max_counters}; lower --scale-b/--scale-s or raise the budget")
    if args.copies < 1 or args.copies % 2 == 0:
        raise UsageError("--copies must be a positive odd integer")
    return cfg


def _config_lines(cfg: FpConfig) -> list[tuple[str, object]]:
    c = cfg.counters()
    return [
        ("B", cfg.B), ("C", cfg.C), ("s", cfg.s), ("k", cfg.k), ("r", cfg.r),
        ("f2_width", cfg.f2_width), ("f2_groups", cfg.f2_groups),
        ("counters_hh", c["hh"]), ("counters_tpest", c["tpest"]), ("counters_f2", c["f2"]),
        ("counters_total", c["total"]), ("word_bytes", WORD_BYTES),
        ("memory_bytes", c["total"] * WORD_BYTES),
    ]


def _emit(pairs: list[tuple[str, object]], args, extra: dict | None = None):
    text = "\n".join(f"{k}: {v}" for k, v in pairs) + "\n"
    sys.stdout.write(text)
    if getattr(args, "out", None) and args.command != "generate":
        with open(args.out, "w") as fh:
            fh.write(text)
    if getattr(args, "json_path", None):
        with open(args.json_path, "w") as fh:
            json.dump({**dict(pairs), **(extra or {})}, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def cmd_generate(args) -> int:
    stream = generate(args.dist, args.n, args.m, args.seed, args.alpha, args.max_update)
    write_stream(stream, args.out)
    sys.stdout.write(f"wrote: {args.out}\nn: {stream.n}\nm: {len(stream)}\nM: {stream.max_update}\n")
    return EXIT_OK


def _load(args) -> Stream:
    stream = read_stream(args.stream, args.n)
    return stream


def cmd_estimate(args) -> int:
    stream = _load(args)
    n = stream.n
    pairs: list[tuple[str, object]] = [("command", "estimate"), ("stream", args.stream), ("n", n),
                                       ("m", len(stream)), ("p", args.p)]
    fv = None
    if args.exact or args.with_oracle:
        fv = FrequencyVector.from_stream(stream)
    if args.exact:
        pairs += [("mode", "exact"), ("exact_Fp", repr(exact_moment(fv, args.p)))]
        _emit(pairs, args)
        return EXIT_OK
    cfg = _config(args, n)
    pairs += [("epsilon", args.epsilon), ("seed", args.seed), ("copies", args.copies)] + _config_lines(cfg)
    res = median_estimate(cfg, stream.items, stream.values, args.copies)
    pairs += [("theta", repr(res.theta)), ("nc_failed", ",".join(str(int(f)) for f in res.nc_failed)),
              ("all_copies_failed", int(res.failed))]
    if fv is not None:
        fp = exact_moment(fv, args.p)
        rel = (res.theta - fp) / fp if fp else float("nan")
        pairs += [("exact_Fp", repr(fp)), ("rel_error", repr(rel))]
    _emit(pairs, args, {"copy_thetas": res.thetas, "config": cfg.to_dict()})
    return EXIT_OK


def cmd_benchmark(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if args.stream:
        stream = _load(args)
        source = args.stream
    else:
        if args.n is None:
            raise UsageError("--n is required when generating the benchmark stream")
        stream = generate(args.dist, args.n, args.m, args.seed, args.alpha, args.max_update)
        source = f"{args.dist}(alpha={args.alpha}, n={args.n}, m={args.m}, M={args.max_update})"
    cfg = _config(args, stream.n)
    start = time.perf_counter()
    summary = run_trials(stream, cfg, args.trials, relative_error_within(args.epsilon), args.copies)
    wall = time.perf_counter() - start
    fp = summary.exact_fp
    pairs: list[tuple[str, object]] = [
        ("command", "benchmark"), ("stream", source), ("n", stream.n), ("m", len(stream)),
        ("p", args.p), ("epsilon", args.epsilon), ("seed", args.seed), ("copies", args.copies),
        *_config_lines(cfg),
        ("trials", summary.trials), ("successes", summary.successes),
        ("success_rate", summary.rate), ("mean_rel_error", summary.mean_rel_error),
        ("exact_Fp", repr(fp)), ("theta_mean", repr(summary.mean)), ("theta_variance", repr(summary.variance)),
        ("success_mean_over_Fp", summary.success_mean / fp if fp else float("nan")),
        ("nc_failures", summary.nc_failures), ("nc_failure_rate", summary.nc_failures / summary.trials),
        ("wall_seconds", round(wall, 3)),
    ]
    _emit(pairs, args, {"thetas": summary.thetas, "passed": summary.passed})
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "estimate": cmd_estimate, "benchmark": cmd_benchmark}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, CounterOverflow) as exc:
        sys.stderr.write(f"fpsketch: error: {exc}\n")
        return EXIT_USAGE
    except (OSError, UnicodeDecodeError) as exc:
        sys.stderr.write(f"fpsketch: I/O error: {exc}\n")
        return EXIT_IO
    except (FpSketchError, AssertionError, FloatingPointError) as exc:
        sys.stderr.write(f"fpsketch: internal error: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
