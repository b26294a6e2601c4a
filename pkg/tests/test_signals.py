import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from madrl.signals import Signal, concat, lp_norm, stack, tail_ratio


def geometric_signal(ratio=0.5, T=30):
    return Signal(np.array([[ratio**t] for t in range(T + 1)]))


def test_zero_signal_any_p():
    s = Signal.zeros(10, 3)
    for p in (1, 2, 5, math.inf):
        assert lp_norm(s, p) == 0.0


def test_single_entry_signal():
    s = Signal.impulse([3.0], 12)
    assert lp_norm(s, 2) == 3.0


def test_geometric_sum_oracle():
    # oracle: plain-float geometric sums, independent of the Signal machinery
    sq = sum(0.25**t for t in range(31))
    assert_allclose(lp_norm(geometric_signal(), 2), math.sqrt(sq), rtol=1e-12)
    assert_allclose(lp_norm(geometric_signal(), 2), 1.1547005383792515, rtol=1e-12)


def test_tail_ratio_oracle():
    s = geometric_signal()
    full = math.sqrt(sum(0.25**t for t in range(31)))
    tail = math.sqrt(sum(0.25**t for t in range(10, 31)))
    assert_allclose(tail_ratio(s, 2, 10), tail / full, rtol=1e-12)
    assert_allclose(tail_ratio(s, 2, 10), 0.5**10, rtol=1e-9)


def test_tail_ratio_trivial_cases():
    assert tail_ratio(Signal.zeros(20, 2), 2, 5) == 0.0
    assert tail_ratio(Signal.impulse([1.0, 0.0], 20), 2, 1) == 0.0


def test_tail_ratio_split_bounds():
    s = Signal.zeros(5, 1)
    with pytest.raises(ValueError):
        tail_ratio(s, 2, 0)
    with pytest.raises(ValueError):
        tail_ratio(s, 2, 6)


def test_inf_norm_is_sup():
    s = Signal(np.array([[1.0, 0.0], [3.0, 4.0], [0.5, 0.5]]))
    assert lp_norm(s, math.inf) == 5.0


def test_invalid_p_rejected():
    s = Signal.zeros(3, 1)
    for p in (0, 0.5, -1):
        with pytest.raises(ValueError):
            lp_norm(s, p)


def test_empty_signal_rejected():
    with pytest.raises(ValueError):
        Signal(np.zeros((0, 3)))


def test_slice_and_concat_round_trip():
    rng = np.random.default_rng(3)
    s = Signal(rng.normal(size=(17, 4)))
    for k in (1, 5, 16):
        parts = concat(s.slice(0, k), s.slice(k, len(s)))
        assert parts == s
    assert s.slice(0, len(s)) == s
    z = Signal.zeros(6, 2)
    assert np.all(z.slice(2, 5).data == 0.0)


def test_slice_out_of_range():
    s = Signal.zeros(5, 1)
    with pytest.raises(IndexError):
        s.slice(0, 8)
    with pytest.raises(IndexError):
        s.slice(3, 3)


@given(c=st.one_of(st.just(0.0),
                   st.floats(min_value=1e-6, max_value=1e6),
                   st.floats(min_value=-1e6, max_value=-1e-6)))
@settings(max_examples=50, deadline=None)
def test_absolute_homogeneity(c):
    rng = np.random.default_rng(0)
    data = rng.normal(size=(9, 3))
    base = lp_norm(Signal(data), 2)
    assert_allclose(lp_norm(Signal(c * data), 2), abs(c) * base, rtol=1e-12)


@given(seed=st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(8, 3))
    b = rng.normal(size=(8, 3))
    for p in (1, 2, math.inf):
        assert lp_norm(Signal(a + b), p) <= lp_norm(Signal(a), p) + lp_norm(Signal(b), p) + 1e-12


def test_norm_monotone_under_truncation():
    rng = np.random.default_rng(11)
    s = Signal(rng.normal(size=(12, 2)))
    full = lp_norm(s, 2)
    for start in range(0, 11):
        for stop in range(start + 1, 13):
            assert lp_norm(s.slice(start, stop), 2) <= full + 1e-15


def test_stack_pairs_samples():
    a = Signal(np.ones((4, 2)))
    b = Signal(np.full((4, 3), 2.0))
    s = stack(a, b)
    assert s.dim == 5
    assert np.all(s[0] == [1, 1, 2, 2, 2])


def test_csv_round_trip_exact(tmp_path):
    rng = np.random.default_rng(5)
    s = Signal(rng.normal(size=(7, 3)) * 1e-7)
    path = tmp_path / "sig.csv"
    s.to_csv(path)
    header = path.read_text().splitlines()[0]
    assert header == "t,s_0,s_1,s_2"
    assert Signal.from_csv(path) == s


def test_signal_is_immutable():
    s = Signal.zeros(3, 2)
    with pytest.raises(ValueError):
        s.data[0, 0] = 1.0
