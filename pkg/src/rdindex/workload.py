"""Seeded generators for relations and query sets, plus dataset file I/O."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import (
    DURATION_ONLY, QUERY_KINDS, RANGE_DURATION, RANGE_ONLY, TIME_MAX,
    ConfigError, DurationRange, Query, Relation, TimeRange,
)


class DatasetError(ValueError):
    """A dataset file could not be read."""


@dataclass(frozen=True)
class Uniform:
    """Integers drawn uniformly from ``[lo, hi]`` (both inclusive)."""

    lo: int
    hi: int

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi:
            raise ConfigError(f"uniform bounds must satisfy 0 <= lo <= hi, got [{self.lo}, {self.hi}]")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.integers(self.lo, self.hi, size=n, endpoint=True, dtype=np.int64)


@dataclass(frozen=True)
class Zipf:
    """Bounded Zipf over ``1..max`` with P(k) proportional to ``k**-beta``.

    ``offset`` is added to every draw.
    """

    beta: float
    max: int
    offset: int = 0

    def __post_init__(self):
        if self.beta < 0 or self.max < 1 or self.offset < 0:
            raise ConfigError(f"invalid zipf parameters beta={self.beta}, max={self.max}, offset={self.offset}")

    def pmf(self) -> np.ndarray:
        w = np.arange(1, self.max + 1, dtype=np.float64) ** -self.beta
        return w / w.sum()

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        cdf = np.cumsum(self.pmf())
        cdf[-1] = 1.0
        k = np.searchsorted(cdf, rng.random(n), side="right") + 1
        return np.minimum(k, self.max).astype(np.int64) + self.offset


Distribution = Union[Uniform, Zipf]


@dataclass(frozen=True)
class DataSpec:
    n: int
    start_dist: Distribution
    dur_dist: Distribution
    seed: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ConfigError(f"relation size must be >= 0, got {self.n}")
        if isinstance(self.dur_dist, Uniform) and self.dur_dist.lo < 1:
            raise ConfigError("durations must be >= 1")

    @classmethod
    def synthetic(cls, n: int, seed: int = 0, max_duration: int = 1000) -> "DataSpec":
        """Uniform start times over ``[1, n]`` and Zipf (beta = 1) durations."""
        return cls(n, Uniform(1, max(n, 1)), Zipf(1.0, max_duration), seed)

    @classmethod
    def skewed_starts(cls, n: int, seed: int = 0, max_duration: int = 1000) -> "DataSpec":
        """Zipf (beta = 1) start times over ``[1, n]`` and uniform durations."""
        return cls(n, Zipf(1.0, max(n, 1)), Uniform(1, max_duration), seed)


def gen_relation(spec: DataSpec) -> Relation:
    rng = np.random.default_rng(spec.seed)
    start = spec.start_dist.sample(rng, spec.n)
    dur = spec.dur_dist.sample(rng, spec.n)
    return Relation(start, start + dur, np.arange(spec.n, dtype=np.int64), validate=False)


# ----------------------------------------------------------------- queries

@dataclass(frozen=True)
class Domain:
    """Extent of a relation in time and duration, used to place queries."""

    min_start: int
    max_end: int
    min_duration: int
    max_duration: int

    @classmethod
    def of(cls, r: Relation) -> "Domain":
        if len(r) == 0:
            return cls(0, 1, 1, 1)
        d = r.durations
        return cls(int(r.start.min()), int(r.end.max()), int(d.min()), int(d.max()))

    @property
    def span(self) -> int:
        return self.max_end - self.min_start


@dataclass(frozen=True)
class QuerySpec:
    """Random queries of one kind.

    Range lengths are uniform over ``range_len`` (default: 1 up to the time
    span of the data) and duration ranges have a uniform lower bound over the
    data's durations and a width uniform over ``dur_width``.
    """

    count: int
    kind: str = RANGE_DURATION
    range_len: Optional[tuple[int, int]] = None
    dur_width: Optional[tuple[int, int]] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in QUERY_KINDS:
            raise ConfigError(f"unknown query kind {self.kind!r}; expected one of {QUERY_KINDS}")
        if self.count < 0:
            raise ConfigError("query count must be >= 0")
        for name in ("range_len", "dur_width"):
            v = getattr(self, name)
            if v is not None and not 1 <= v[0] <= v[1]:
                raise ConfigError(f"{name} must satisfy 1 <= lo <= hi, got {v}")


def gen_queries(spec: QuerySpec, domain: Domain) -> list[Query]:
    rng = np.random.default_rng(spec.seed)
    n = spec.count
    rlo, rhi = spec.range_len or (1, max(domain.span, 1))
    wlo, whi = spec.dur_width or (1, domain.max_duration - domain.min_duration + 1)
    ts = rng.integers(domain.min_start, max(domain.max_end, domain.min_start + 1), size=n)
    length = rng.integers(rlo, rhi, size=n, endpoint=True)
    dmin = rng.integers(domain.min_duration, domain.max_duration, size=n, endpoint=True)
    width = rng.integers(wlo, whi, size=n, endpoint=True)
    out = []
    for a, L, d, w in zip(ts.tolist(), length.tolist(), dmin.tolist(), width.tolist()):
        rng_c = TimeRange(a, a + L) if spec.kind != DURATION_ONLY else None
        dur_c = DurationRange(d, d + w - 1) if spec.kind != RANGE_ONLY else None
        out.append(Query(rng_c, dur_c))
    return out


@dataclass(frozen=True)
class MixFractions:
    f_rd: Fraction
    f_r: Fraction
    f_d: Fraction

    def __post_init__(self):
        vals = [Fraction(x) for x in (self.f_rd, self.f_r, self.f_d)]
        if any(v < 0 for v in vals) or sum(vals) != 1:
            raise ConfigError(f"mix fractions must be non-negative and sum to 1, got {vals}")
        object.__setattr__(self, "f_rd", vals[0])
        object.__setattr__(self, "f_r", vals[1])
        object.__setattr__(self, "f_d", vals[2])

    def as_dict(self) -> dict[str, Fraction]:
        return {RANGE_DURATION: self.f_rd, RANGE_ONLY: self.f_r, DURATION_ONLY: self.f_d}

    def split(self, count: int) -> dict[str, int]:
        """Largest-remainder rounding of ``count`` into per-kind counts."""
        exact = {k: f * count for k, f in self.as_dict().items()}
        out = {k: math.floor(v) for k, v in exact.items()}
        short = count - sum(out.values())
        by_remainder = sorted(exact, key=lambda k: (-(exact[k] - out[k]), QUERY_KINDS.index(k)))
        for k in by_remainder[:short]:
            out[k] += 1
        return out


def gen_mixed(spec: QuerySpec, fractions: MixFractions, domain: Domain) -> list[Query]:
    """Queries of all three kinds in the given proportions, shuffled."""
    queries = []
    for offset, (kind, count) in enumerate(fractions.split(spec.count).items()):
        sub = replace(spec, count=count, kind=kind, seed=spec.seed * 3 + offset)
        queries.extend(gen_queries(sub, domain))
    order = np.random.default_rng(spec.seed).permutation(len(queries))
    return [queries[i] for i in order]


# ------------------------------------------------------ selectivity grid

@dataclass(frozen=True)
class GridQuery:
    """One point of a selectivity-grid workload."""

    row: int  # duration target index, 1..g
    col: int  # time target index, 1..g
    query: Query
    target_time: float
    target_duration: float
    time_selectivity: float
    duration_selectivity: float
    realizable: bool

    @property
    def kind(self) -> str:
        return self.query.kind


def _closest(fracs: np.ndarray, target: float) -> int:
    """Index of the entry of the non-decreasing ``fracs`` closest to ``target``."""
    k = int(np.searchsorted(fracs, target, side="left"))
    if k >= len(fracs):
        return len(fracs) - 1
    if k > 0 and target - fracs[k - 1] <= fracs[k] - target:
        return k - 1
    return k


class _TimeCounter:
    """Exact overlap counts via ``#(start < te) - #(end <= ts)``."""

    def __init__(self, r: Relation):
        self.starts = np.sort(r.start)
        self.ends = np.sort(r.end)
        self.n = len(r)
        self.lo = int(self.starts[0])
        self.hi = int(self.ends[-1])

    def count(self, ts: int, te: int) -> int:
        return int(np.searchsorted(self.starts, te, side="left") - np.searchsorted(self.ends, ts, side="right"))

    def nested_range(self, anchor: int, target: float) -> tuple[int, int]:
        """The range ``[anchor - L, anchor + L + 1)`` with overlap closest to ``target``.

        Ranges grow with ``L``, so larger targets always give supersets.
        """
        need = target * self.n

        def rng_of(L):
            return max(anchor - L, 0), anchor + L + 1

        top = max(anchor - self.lo, self.hi - anchor) + 1
        lo, hi = 0, top
        while lo < hi:
            mid = (lo + hi) // 2
            if self.count(*rng_of(mid)) >= need:
                hi = mid
            else:
                lo = mid + 1
        best = lo
        if lo > 0 and need - self.count(*rng_of(lo - 1)) <= self.count(*rng_of(lo)) - need:
            best = lo - 1
        return rng_of(best)


class _DurationCounter:
    def __init__(self, r: Relation):
        self.values, self.counts = np.unique(r.durations, return_counts=True)
        self.n = len(r)

    def expansion(self, anchor: int) -> tuple[list[tuple[int, int]], np.ndarray]:
        """Nested duration ranges grown outwards from value index ``anchor``.

        At each step the neighbouring value with fewer intervals is added
        first, which keeps consecutive selectivities close together.
        """
        lo = hi = anchor
        total = int(self.counts[anchor])
        spans, fracs = [(lo, hi)], [total]
        m = len(self.values)
        while lo > 0 or hi < m - 1:
            left = self.counts[lo - 1] if lo > 0 else None
            right = self.counts[hi + 1] if hi < m - 1 else None
            if right is None or (left is not None and left < right):
                lo -= 1
                total += int(left)
            else:
                hi += 1
                total += int(right)
            spans.append((lo, hi))
            fracs.append(total)
        return spans, np.asarray(fracs, dtype=np.float64) / self.n


def selectivity_grid_queries(r: Relation, g: int, seed: int = 0, tolerance: float = 0.1) -> list[GridQuery]:
    """A ``g x g`` grid of range-duration queries spread over the selectivity plane.

    Query ``(row=b, col=a)`` aims at time selectivity ``a/g`` and duration
    selectivity ``b/g``. Each row shares one time anchor and each column one
    duration anchor, and the ranges around an anchor are nested, so achieved
    selectivities never decrease along a row or column. Points whose achieved
    selectivity misses the target by more than ``tolerance`` (relative) are
    returned with ``realizable=False``.
    """
    if g < 1:
        raise ConfigError(f"grid dimension must be >= 1, got {g}")
    if len(r) == 0:
        raise ConfigError("selectivity grid needs a non-empty relation")
    rng = np.random.default_rng(seed)
    times = _TimeCounter(r)
    durs = _DurationCounter(r)
    n = len(r)
    targets = [k / g for k in range(1, g + 1)]

    # one duration anchor per column, preferring anchors whose nested
    # expansion can hit every duration target within tolerance
    pool = np.flatnonzero(durs.counts <= (1 + tolerance) * n / g)
    if not len(pool):
        pool = np.arange(len(durs.values))
    expansions = {}

    def coverage(anchor):
        if anchor not in expansions:
            spans, fracs = durs.expansion(anchor)
            hits = sum(abs(fracs[_closest(fracs, t)] - t) <= tolerance * t for t in targets)
            expansions[anchor] = (spans, fracs, hits)
        return expansions[anchor]

    columns = {}
    for a in range(1, g + 1):
        best = None
        for anchor in rng.permutation(pool)[:64].tolist():
            spans, fracs, hits = coverage(anchor)
            if best is None or hits > best[2]:
                best = (spans, fracs, hits)
            if hits == g:
                break
        columns[a] = best[:2]
    # likewise one time anchor per row, retrying anchors that sit in a region
    # so dense that the smallest targets are out of reach
    def time_hits(anchor):
        return sum(abs(times.count(*times.nested_range(anchor, t)) / n - t) <= tolerance * t for t in targets)

    rows = {}
    for b in range(1, g + 1):
        best = None
        for anchor in rng.integers(times.lo, times.hi, size=64, endpoint=True).tolist():
            hits = time_hits(anchor)
            if best is None or hits > best[1]:
                best = (anchor, hits)
            if hits == g:
                break
        rows[b] = best[0]

    out = []
    for b in range(1, g + 1):
        td = targets[b - 1]
        for a in range(1, g + 1):
            tt = targets[a - 1]
            ts, te = times.nested_range(rows[b], tt)
            spans, fracs = columns[a]
            k = _closest(fracs, td)
            lo, hi = spans[k]
            q = Query(TimeRange(ts, te), DurationRange(int(durs.values[lo]), int(durs.values[hi])))
            t_sel = times.count(ts, te) / n
            d_sel = float(fracs[k])
            ok = abs(t_sel - tt) <= tolerance * tt and abs(d_sel - td) <= tolerance * td
            out.append(GridQuery(b, a, q, tt, td, t_sel, d_sel, ok))
    return out


# --------------------------------------------------------- transformations

def scale_dataset(r: Relation, eta: int) -> Relation:
    """Concatenate ``eta`` copies of ``r``, copy ``i`` shifted by ``i`` times its span."""
    if eta < 1:
        raise ConfigError(f"scale factor must be >= 1, got {eta}")
    if len(r) == 0:
        raise ConfigError("cannot scale an empty relation")
    span = int(r.end.max()) - int(r.start.min())
    if (eta - 1) * span > TIME_MAX - int(r.end.max()):
        raise OverflowError(f"scaling by {eta} overflows the time domain")
    shift = np.repeat(np.arange(eta, dtype=np.int64) * span, len(r))
    start = np.tile(r.start, eta) + shift
    end = np.tile(r.end, eta) + shift
    return Relation(start, end, np.arange(eta * len(r), dtype=np.int64), validate=False)


# ------------------------------------------------------------------- files

def load_relation(path, fmt: str = "csv") -> Relation:
    """Read ``start,end[,id]`` rows; a non-numeric first row is taken as a header."""
    if fmt != "csv":
        raise DatasetError(f"unsupported dataset format {fmt!r}")
    path = Path(path)
    starts, ends, ids = [], [], []
    with path.open(newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and not row[0].strip().lstrip("-").isdigit():
                continue
            if len(row) not in (2, 3):
                raise DatasetError(f"{path}:{lineno}: expected 2 or 3 columns, got {len(row)}")
            try:
                vals = [int(c) for c in row]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer value in {row!r}") from None
            if vals[0] < 0 or vals[0] >= vals[1]:
                raise DatasetError(f"{path}:{lineno}: invalid interval [{vals[0]}, {vals[1]})")
            starts.append(vals[0])
            ends.append(vals[1])
            if len(vals) == 3:
                ids.append(vals[2])
    if not starts:
        raise DatasetError(f"{path}: no intervals")
    if ids and len(ids) != len(starts):
        raise DatasetError(f"{path}: identifier column present on some rows only")
    try:
        return Relation(starts, ends, ids or None)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def save_relation(r: Relation, path, with_ids: bool = True) -> None:
    path = Path(path)
    cols = [r.start, r.end] + ([r.ident] if with_ids else [])
    np.savetxt(path, np.column_stack(cols), fmt="%d", delimiter=",")
