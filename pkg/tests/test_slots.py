import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from synthetic import SyntheticChain, call_budget, oracle, random_chain

from linkxplore.errors import FutureTimestamp, TimestampBeforeHistory
from linkxplore.slots import (
    ClockCalibration,
    bracket,
    estimate_slot,
    locate,
    nearest_slot,
    round_half_away,
)


def linear_chain(n: int, seconds_per_slot: int = 1) -> SyntheticChain:
    return SyntheticChain([s * seconds_per_slot for s in range(n)])


def test_estimate_formula():
    assert estimate_slot(1000.0, 1_000_000, 1400.0) == 999_000
    assert estimate_slot(5.0, 77, 5.0) == 77
    assert estimate_slot(0.0, 10, 1e6) == 0
    with pytest.raises(FutureTimestamp):
        estimate_slot(6.0, 77, 5.0)


def test_round_half_away_from_zero():
    assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, -2.5, 2.4)] == [1, 2, 3, -1, -3, 2]


def test_calibration_positive():
    with pytest.raises(ValueError):
        ClockCalibration(0)


def test_bracket_on_unit_clock():
    low, high = bracket(500, 490, linear_chain(2000))
    assert low <= 500 <= high
    assert low <= 490 <= high or low <= 500 <= high


def test_bracket_at_exact_guess():
    assert bracket(500, 500, linear_chain(2000)) == (500, 500)


def test_bracket_before_history():
    chain = SyntheticChain([100 + s for s in range(50)])
    with pytest.raises(TimestampBeforeHistory):
        bracket(10, 20, chain)


def test_equidistant_pair():
    choice = locate(11, 3, linear_chain(100, 2))
    assert choice.slots == (5, 6)
    assert (choice.floor_time, choice.ceil_time) == (10, 12)


def test_nearer_ceiling():
    assert locate(11.5, 3, linear_chain(100, 2)).slots == (6,)


def test_exact_hit():
    choice = nearest_slot(40, linear_chain(100, 2))
    assert choice.slots == (20,) and choice.floor_slot == choice.ceil_slot == 20


def test_history_edges():
    chain = SyntheticChain([None, 10, 11, None, 12, None])
    with pytest.raises(TimestampBeforeHistory):
        nearest_slot(9, chain)
    with pytest.raises(FutureTimestamp):
        nearest_slot(13, chain)
    assert nearest_slot(12, chain).slots == (4,)
    assert nearest_slot(10, chain).slots == (1,)


def test_skipped_slots_are_transparent():
    chain = SyntheticChain([0, None, None, None, 8, None, 10])
    assert nearest_slot(5, chain).slots == (4,)
    assert nearest_slot(3, chain).slots == (0,)
    assert nearest_slot(4, chain).slots == (0, 4)


@given(st.integers(0, 2**32), st.integers(5, 400), st.floats(0, 0.2), st.data())
@settings(max_examples=200, deadline=None)
def test_matches_linear_scan(seed, n, skip, data):
    chain = random_chain(random.Random(seed), n, skip)
    resolved = chain.resolved()
    lo, hi = resolved[0][1], resolved[-1][1]
    t = data.draw(st.one_of(st.integers(lo - 3, hi + 3), st.floats(lo - 3, hi + 3)))
    expected = oracle(chain, t)
    if isinstance(expected, type):
        with pytest.raises(expected):
            nearest_slot(t, chain)
    else:
        assert nearest_slot(t, chain).slots == expected


@given(st.integers(0, 2**32), st.data())
@settings(max_examples=100, deadline=None)
def test_monotone_in_t(seed, data):
    chain = random_chain(random.Random(seed), 300, 0.1)
    resolved = chain.resolved()
    lo, hi = resolved[0][1], resolved[-1][1]
    t1 = data.draw(st.floats(lo, hi))
    t2 = data.draw(st.floats(t1, hi))
    assert min(nearest_slot(t1, chain).slots) <= max(nearest_slot(t2, chain).slots)


@given(st.integers(0, 2**32), st.integers(50, 5000), st.floats(0, 0.2), st.data())
@settings(max_examples=150, deadline=None)
def test_call_budget(seed, n, skip, data):
    chain = random_chain(random.Random(seed), n, skip)
    resolved = chain.resolved()
    t = data.draw(st.floats(resolved[0][1], resolved[-1][1]))
    budget = call_budget(chain, t)
    nearest_slot(t, chain)
    assert chain.calls <= budget
