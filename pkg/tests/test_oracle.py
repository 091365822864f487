import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fpsketch.core import derive_params
from fpsketch.errors import UsageError
from fpsketch.oracle import (
    FrequencyVector, always, exact_heavy, exact_moment, relative_error_within, run_trials, trial_seed,
)
from fpsketch.streams import Stream, generate


def fv_of(values):
    fv = FrequencyVector(len(values))
    fv.update_many(np.arange(len(values)), np.array(values))
    return fv


def test_exact_moment_examples():
    assert exact_moment(fv_of([2, -3]), 3) == 35
    assert exact_moment(fv_of([1, 1, 1, 1]), 2.5) == 4
    assert exact_moment(FrequencyVector(10), 3) == 0
    with pytest.raises(UsageError):
        exact_moment(fv_of([1]), 0)


@given(st.lists(st.tuples(st.integers(0, 49), st.integers(-10**6, 10**6)), max_size=300))
@settings(max_examples=100)
def test_f2_matches_streaming_accumulator(ups):
    fv = FrequencyVector(50)
    f = [0] * 50
    f2 = 0
    for i, v in ups:
        fv.update(i, v)
        # (f + v)^2 - f^2 = 2 f v + v^2
        f2 += 2 * f[i] * v + v * v
        f[i] += v
    got = exact_moment(fv, 2)
    assert got == pytest.approx(f2, rel=1e-12, abs=0)
    assert fv.m == len(ups)
    assert fv.max_update == max((abs(v) for _, v in ups), default=0)


def test_update_domain_check():
    fv = FrequencyVector(5)
    with pytest.raises(UsageError):
        fv.update(5, 1)
    with pytest.raises(UsageError):
        fv.update_many([0, -1], [1, 1])


def test_exact_heavy_cases():
    fv = fv_of([0, 5, -3, 1, 0])
    y = np.array([1.0, 2.0, 4.0, 1.5, 9.0])
    assert list(exact_heavy(fv, y, 1e-12)) == [1, 2, 3]
    R = 16.0
    assert exact_heavy(fv, y, 5 * R + 1).size == 0
    # g = (0, 10, -12, 1.5, 0)
    assert list(exact_heavy(fv, y, 10)) == [1, 2]
    assert list(exact_heavy(fv, y, 11)) == [2]
    with pytest.raises(UsageError):
        exact_heavy(fv, y[:3], 1)


def small_setup():
    stream = generate("zipf", 1024, 20_000, 3, 1.1)
    base = derive_params(1024, 3, 0.3)
    cfg = derive_params(1024, 3, 0.3, scale_b=300 / base.B, scale_s=4 / base.s, scale_k=2 / base.k,
                        master_seed=9, f2_width=2048, f2_groups=5)
    return stream, cfg


def test_run_trials_always_true():
    stream, cfg = small_setup()
    s = run_trials(stream, cfg, 3, always)
    assert s.rate == 1.0 and s.successes == 3 and len(s.thetas) == 3


def test_run_trials_deterministic():
    stream, cfg = small_setup()
    pred = relative_error_within(0.3)
    a, b = run_trials(stream, cfg, 4, pred), run_trials(stream, cfg, 4, pred)
    assert a == b
    one, again = run_trials(stream, cfg, 1, pred), run_trials(stream, cfg, 1, pred)
    assert one.thetas == again.thetas and one.variance == 0.0


def test_run_trials_summary_text():
    stream, cfg = small_setup()
    s = run_trials(stream, cfg, 2, relative_error_within(0.3))
    text = s.to_text()
    for key in ("trials", "successes", "mean", "variance", "nc_failures"):
        assert f"\n{key}: " in "\n" + text
    assert 0.0 <= s.rate <= 1.0


def test_run_trials_rejects_zero():
    stream, cfg = small_setup()
    with pytest.raises(UsageError):
        run_trials(stream, cfg, 0)


def test_trial_seeds_distinct():
    assert len({trial_seed(1, t) for t in range(500)}) == 500


def test_empty_stream_summary():
    _, cfg = small_setup()
    empty = Stream(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), 1024, 1)
    s = run_trials(empty, cfg, 2, always)
    assert s.thetas == [0.0, 0.0] and s.exact_fp == 0.0
