"""Intervals, queries and the match predicate shared by every index.

Time is an abstract discrete domain of non-negative integers. Intervals are
closed-open, ``[start, end)``, and their duration is ``end - start``. Duration
ranges are inclusive on both ends.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional, Sequence

import numpy as np

#: Stand-in for an unbounded upper limit (largest value representable in int64).
TIME_MAX = 2**63 - 1

RANGE_DURATION = "range-duration"
RANGE_ONLY = "range-only"
DURATION_ONLY = "duration-only"
QUERY_KINDS = (RANGE_DURATION, RANGE_ONLY, DURATION_ONLY)


class ConfigError(ValueError):
    """Invalid parameters for an index, generator or experiment."""


@dataclass(frozen=True, slots=True)
class Interval:
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0:
            raise ValueError(f"interval start must be non-negative, got {self.start}")
        if not self.start < self.end:
            raise ValueError(f"interval must satisfy start < end, got [{self.start}, {self.end})")

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True, slots=True)
class TimeRange:
    start: int
    end: int

    def __post_init__(self):
        if self.start < 0 or not self.start < self.end:
            raise ValueError(f"invalid time range [{self.start}, {self.end})")


@dataclass(frozen=True, slots=True)
class DurationRange:
    min: int
    max: int

    def __post_init__(self):
        if not 1 <= self.min <= self.max:
            raise ValueError(f"invalid duration range [{self.min}, {self.max}]")


@dataclass(frozen=True, slots=True)
class Query:
    range: Optional[TimeRange] = None
    duration: Optional[DurationRange] = None

    def __post_init__(self):
        if self.range is None and self.duration is None:
            raise ValueError("a query needs a range constraint, a duration constraint, or both")

    @classmethod
    def of(cls, time=None, duration=None) -> "Query":
        """Build a query from plain pairs: ``Query.of((14, 44), (5, 15))``."""
        rng = TimeRange(*time) if time is not None else None
        dur = DurationRange(*duration) if duration is not None else None
        return cls(rng, dur)

    @property
    def kind(self) -> str:
        if self.range is None:
            return DURATION_ONLY
        if self.duration is None:
            return RANGE_ONLY
        return RANGE_DURATION

    def bounds(self) -> tuple[int, int, int, int]:
        """Return ``(ts, te, dmin, dmax)`` with absent constraints made vacuous."""
        ts, te = (0, TIME_MAX) if self.range is None else (self.range.start, self.range.end)
        dmin, dmax = (1, TIME_MAX) if self.duration is None else (self.duration.min, self.duration.max)
        return ts, te, dmin, dmax


@dataclass(frozen=True)
class QueryResult:
    """Outcome of a query.

    ``examined`` counts every stored entry a scan looked at, including the one
    that made it stop early. ``matches`` is only materialised when the caller
    asked for identifiers; ``count`` is always set.
    """

    count: int
    examined: int
    matches: Optional[frozenset] = None


def duration(i: Interval) -> int:
    return i.end - i.start


def overlaps(i: Interval, t: TimeRange) -> bool:
    return i.end > t.start and i.start < t.end


def matches(i: Interval, q: Query) -> bool:
    if q.range is not None and not overlaps(i, q.range):
        return False
    if q.duration is not None and not q.duration.min <= i.end - i.start <= q.duration.max:
        return False
    return True


class Triple(NamedTuple):
    start: int
    end: int
    ident: int


class Relation:
    """A bag of intervals, each tagged with a unique integer identifier.

    Columns are kept as int64 numpy arrays; the same ``(start, end)`` pair may
    appear several times under different identifiers.
    """

    __slots__ = ("start", "end", "ident")

    def __init__(self, start, end, ident=None, *, validate: bool = True):
        self.start = np.asarray(start, dtype=np.int64).reshape(-1)
        self.end = np.asarray(end, dtype=np.int64).reshape(-1)
        if ident is None:
            ident = np.arange(len(self.start), dtype=np.int64)
        self.ident = np.asarray(ident, dtype=np.int64).reshape(-1)
        if not len(self.start) == len(self.end) == len(self.ident):
            raise ValueError("start, end and ident must have equal lengths")
        if validate:
            self._validate()

    def _validate(self):
        if len(self.start) == 0:
            return
        if self.start.min() < 0:
            raise ValueError("interval starts must be non-negative")
        bad = np.flatnonzero(self.start >= self.end)
        if len(bad):
            row = int(bad[0])
            raise ValueError(
                f"interval {row} has start {self.start[row]} >= end {self.end[row]}"
            )
        if len(np.unique(self.ident)) != len(self.ident):
            raise ValueError("tuple identifiers must be unique")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, int]], ids=None) -> "Relation":
        pairs = list(pairs)
        start = [p[0] for p in pairs]
        end = [p[1] for p in pairs]
        return cls(start, end, ids)

    @classmethod
    def empty(cls) -> "Relation":
        return cls([], [], [])

    def __len__(self) -> int:
        return len(self.start)

    def __iter__(self) -> Iterator[tuple[Interval, int]]:
        for s, e, i in self.triples():
            yield Interval(s, e), i

    def __eq__(self, other) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return (
            np.array_equal(self.start, other.start)
            and np.array_equal(self.end, other.end)
            and np.array_equal(self.ident, other.ident)
        )

    def __repr__(self) -> str:
        return f"Relation(n={len(self)})"

    @property
    def durations(self) -> np.ndarray:
        return self.end - self.start

    def triples(self) -> list[Triple]:
        return [
            Triple(s, e, i)
            for s, e, i in zip(self.start.tolist(), self.end.tolist(), self.ident.tolist())
        ]

    def subset(self, mask_or_index) -> "Relation":
        return Relation(
            self.start[mask_or_index], self.end[mask_or_index], self.ident[mask_or_index],
            validate=False,
        )

    def match_mask(self, q: Query) -> np.ndarray:
        """Vectorised evaluation of :func:`matches` over the whole relation."""
        ts, te, dmin, dmax = q.bounds()
        d = self.end - self.start
        return (self.end > ts) & (self.start < te) & (d >= dmin) & (d <= dmax)
