import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rdindex import DurationRange, Interval, Query, Relation, TimeRange, duration, matches, overlaps
from rdindex.core import DURATION_ONLY, RANGE_DURATION, RANGE_ONLY, TIME_MAX

from conftest import R1, R2, R3, R4

DOMAIN = 8


def test_duration_examples():
    assert duration(Interval(7, 13)) == 6
    assert duration(Interval(0, 1)) == 1
    assert duration(Interval(19, 34)) == 15
    assert Interval(19, 34).duration == 15


def test_overlaps_examples():
    t = TimeRange(14, 44)
    assert not overlaps(Interval(7, 13), t)
    assert overlaps(Interval(19, 34), t)
    assert not overlaps(Interval(0, 5), TimeRange(5, 9))


def test_matches_examples():
    q = Query.of((14, 44), (5, 15))
    assert matches(Interval(23, 33), q)
    assert not matches(Interval(9, 11), q)
    assert matches(Interval(7, 13), Query.of(duration=(6, 6)))
    # duration bounds are inclusive: r3 lasts exactly 15
    assert matches(Interval(19, 34), q)


def test_running_example_oracle(running):
    q = Query.of((14, 44), (5, 15))
    got = {int(i) for i in running.ident[running.match_mask(q)]}
    assert got == {R3, R4}
    got = {int(i) for i in running.ident[running.match_mask(Query.of(duration=(5, 8)))]}
    assert got == {R1}
    assert R2 not in got


@pytest.mark.parametrize("bad", [(5, 5), (6, 5), (-1, 3)])
def test_interval_validation(bad):
    with pytest.raises(ValueError):
        Interval(*bad)


def test_query_validation():
    with pytest.raises(ValueError):
        Query()
    with pytest.raises(ValueError):
        DurationRange(0, 3)
    with pytest.raises(ValueError):
        DurationRange(4, 3)
    with pytest.raises(ValueError):
        TimeRange(3, 3)


def test_query_kinds_and_bounds():
    assert Query.of((1, 2), (1, 1)).kind == RANGE_DURATION
    assert Query.of((1, 2)).kind == RANGE_ONLY
    assert Query.of(duration=(1, 1)).kind == DURATION_ONLY
    assert Query.of((3, 9)).bounds() == (3, 9, 1, TIME_MAX)
    assert Query.of(duration=(2, 4)).bounds() == (0, TIME_MAX, 2, 4)


def _all_intervals():
    return [(a, b) for a in range(DOMAIN + 1) for b in range(a + 1, DOMAIN + 1)]


def _all_queries():
    ranges = [None] + _all_intervals()
    durs = [None] + [(lo, hi) for lo in range(1, DOMAIN + 1) for hi in range(lo, DOMAIN + 1)]
    return [(r, d) for r, d in itertools.product(ranges, durs) if r is not None or d is not None]


def test_truth_table_enumeration():
    """Compare against a set-based definition over every interval and query on [0, 8]."""
    intervals = _all_intervals()
    rel = Relation.from_pairs(intervals)
    for r, d in _all_queries():
        q = Query.of(r, d)
        expected = []
        for a, b in intervals:
            points = set(range(a, b))
            ok = True
            if r is not None:
                ok = bool(points & set(range(*r)))
            if d is not None:
                ok = ok and d[0] <= len(points) <= d[1]
            expected.append(ok)
        got = [matches(Interval(a, b), q) for a, b in intervals]
        assert got == expected, (r, d)
        assert rel.match_mask(q).tolist() == expected, (r, d)


@given(st.integers(0, 100), st.integers(1, 50), st.integers(0, 100))
def test_closed_open_adjacency(a, length, c_extra):
    b = a + length
    c = b + 1 + c_extra
    assert not overlaps(Interval(a, b), TimeRange(b, c))
    if b >= 1:
        assert overlaps(Interval(a, b), TimeRange(b - 1, c))


interval_st = st.tuples(st.integers(0, 60), st.integers(1, 30)).map(lambda t: Interval(t[0], t[0] + t[1]))
range_st = st.tuples(st.integers(0, 60), st.integers(1, 30)).map(lambda t: (t[0], t[0] + t[1]))
dur_st = st.tuples(st.integers(1, 30), st.integers(0, 30)).map(lambda t: (t[0], t[0] + t[1]))


@given(interval_st, range_st, dur_st, st.integers(0, 10), st.integers(0, 10))
def test_matches_monotone_in_constraints(i, r, d, grow_r, grow_d):
    narrow = Query.of(r, d)
    wide = Query.of((max(0, r[0] - grow_r), r[1] + grow_r), (max(1, d[0] - grow_d), d[1] + grow_d))
    if matches(i, narrow):
        assert matches(i, wide)
    assert matches(i, narrow) == (overlaps(i, TimeRange(*r)) and d[0] <= i.duration <= d[1])


def test_relation_basics():
    r = Relation.from_pairs([(1, 2), (1, 2)], ids=[10, 11])
    assert len(r) == 2
    assert [iv for iv, _ in r] == [Interval(1, 2), Interval(1, 2)]
    with pytest.raises(ValueError):
        Relation.from_pairs([(1, 2), (3, 4)], ids=[5, 5])
    with pytest.raises(ValueError):
        Relation.from_pairs([(4, 3)])
    assert len(Relation.empty()) == 0
    assert np.array_equal(Relation.from_pairs([(2, 9)]).durations, [7])
