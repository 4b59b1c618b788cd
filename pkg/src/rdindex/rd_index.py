"""The RD-index: an adaptive grid over (start time x duration).

Intervals are first cut into *columns* of about ``s**2`` entries along one
dimension, and every column is cut into *cells* of about ``s`` entries along
the other. Boundaries come from the data itself (equi-depth), so the grid
follows whatever skew the relation has. Runs of equal keys are never split:
a column (cell) holding more than ``s**2`` (``s``) entries is *heavy* and all
of its entries share the same partition key.

Each cell stores its entries as ``(-end, ident, start)`` tuples in ascending
order, i.e. by decreasing end time with ties broken by identifier. This makes
the end-time stopping test of a scan a plain ``bisect``.
"""

from __future__ import annotations

import enum
import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .core import ConfigError, Interval, Query, QueryResult, Relation

Entry = tuple  # (-end, ident, start)


class DuplicateKeyError(KeyError):
    """The identifier is already stored in the index."""


class DimensionOrder(str, enum.Enum):
    TIME_THEN_DURATION = "td"
    DURATION_THEN_TIME = "dt"

    @classmethod
    def parse(cls, value) -> "DimensionOrder":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown dimension order {value!r}; expected 'td' or 'dt'") from None


def _start(e: Entry) -> int:
    return e[2]


def _duration(e: Entry) -> int:
    return -e[0] - e[2]


def next_subseq(seq: Sequence, h: int, b: int, key: Optional[Callable] = None) -> tuple[int, int]:
    """Return the half-open bounds ``(h, h2)`` of the next group of ``seq``.

    ``seq`` must be sorted by ``key``. The group starting at ``h`` holds at
    most ``b`` items, unless all of its items share one key (a heavy group).
    A run of equal keys is never split between two groups.
    """
    if b < 1:
        raise ValueError(f"group size bound must be >= 1, got {b}")
    if not 0 <= h < len(seq):
        raise IndexError(f"position {h} out of bounds for sequence of length {len(seq)}")
    keys = seq if key is None else [key(x) for x in seq]
    return h, _next_cut(keys, h, b)


def _next_cut(keys: Sequence[int], h: int, b: int) -> int:
    n = len(keys)
    if h + b >= n:
        return n
    cut = h + b
    first = keys[h]
    if keys[cut] == first:
        # heavy group: extend past the run of the first key
        return bisect_right(keys, first, cut, n)
    while keys[cut - 1] == keys[cut]:
        cut -= 1
    return cut


def _partition(keys: Sequence[int], b: int) -> list[int]:
    """Cut positions produced by repeated :func:`next_subseq` calls."""
    cuts = []
    h = 0
    while h < len(keys):
        h = _next_cut(keys, h, b)
        cuts.append(h)
    return cuts


def _split_oversized(entries: list, key, limit: int, b: int) -> list[list]:
    """Split a group that outgrew ``limit`` into pieces, first cut with bound ``b``.

    A group whose entries all share one key stays whole. Normally this yields
    two pieces; more only when a heavy run received an entry with another key.
    """
    entries = sorted(entries, key=key)
    keys = [key(e) for e in entries]
    parts = []
    lo = 0
    while len(entries) - lo > limit and keys[lo] != keys[-1]:
        cut = _next_cut(keys, lo, b)
        parts.append(entries[lo:cut])
        lo = cut
    parts.append(entries[lo:])
    return parts


def _fix_cummax(own: list[int], cum: list[int], first: int, dirty_end: int) -> None:
    """Recompute the running maximum ``cum`` of ``own`` from position ``first``.

    Positions past ``dirty_end`` whose stored value is already right end the
    walk, since everything after them only depends on unchanged values.
    """
    running = cum[first - 1] if first > 0 else 0
    for j in range(first, len(own)):
        v = own[j] if own[j] > running else running
        if j > dirty_end and cum[j] == v:
            return
        cum[j] = v
        running = v


class Column:
    """One first-dimension partition and the cells it is cut into.

    ``cells[j]`` is the list of entries of cell ``j``; the ``cell_*`` lists are
    its ancillary arrays (min/max second-dimension key, own max end time, and
    cumulative max end time over cells ``0..j``).
    """

    __slots__ = ("cells", "cell_lo", "cell_hi", "cell_end", "cell_cummax",
                 "lo", "hi", "size", "max_end")

    def __init__(self):
        self.cells: list[list[Entry]] = []
        self.cell_lo: list[int] = []
        self.cell_hi: list[int] = []
        self.cell_end: list[int] = []
        self.cell_cummax: list[int] = []
        self.lo = 0
        self.hi = 0
        self.size = 0
        self.max_end = 0

    def entries(self) -> Iterable[Entry]:
        for cell in self.cells:
            yield from cell

    def __len__(self):
        return self.size


@dataclass(frozen=True)
class IndexStats:
    columns: int
    cells: int
    heavy_columns: int
    heavy_cells: int
    bytes_per_interval: float
    build_millis: float


# Analytic size model: two 64-bit words per stored interval, 8 bytes per
# ancillary-array slot, and a fixed header per column and per cell. The tuple
# identifier is the reference to the row and is not counted as index space.
INTERVAL_BYTES = 16
SLOT_BYTES = 8
HEADER_BYTES = 64
COLUMN_SLOTS = 3  # col_lo, col_hi, col_cummax
CELL_SLOTS = 4  # cell_lo, cell_hi, cell_end, cell_cummax


class RDIndex:
    """Range-duration index over a relation of intervals.

    Build with :meth:`build`; ``order`` picks which dimension is partitioned
    into columns (``"td"``: start time first, ``"dt"``: duration first).
    """

    def __init__(self, s: int, order=DimensionOrder.DURATION_THEN_TIME):
        if not isinstance(s, int) or s < 1:
            raise ConfigError(f"page size must be a positive integer, got {s!r}")
        self.s = s
        self.order = DimensionOrder.parse(order)
        if self.order is DimensionOrder.TIME_THEN_DURATION:
            self._key1, self._key2 = _start, _duration
        else:
            self._key1, self._key2 = _duration, _start
        self.columns: list[Column] = []
        self.col_lo: list[int] = []
        self.col_hi: list[int] = []
        self.col_end: list[int] = []
        self.col_cummax: list[int] = []
        self.n = 0
        self.build_millis = 0.0

    # ------------------------------------------------------------------ build

    @classmethod
    def build(cls, relation: Relation, s: int, order=DimensionOrder.DURATION_THEN_TIME) -> "RDIndex":
        t0 = time.perf_counter()
        idx = cls(s, order)
        entries = [
            (-e, i, st)
            for st, e, i in zip(relation.start.tolist(), relation.end.tolist(), relation.ident.tolist())
        ]
        idx._load(entries)
        idx.build_millis = (time.perf_counter() - t0) * 1e3
        return idx

    def _load(self, entries: list[Entry]) -> None:
        key1 = self._key1
        entries.sort(key=key1)
        keys = [key1(e) for e in entries]
        h = 0
        for cut in _partition(keys, self.s * self.s):
            self._append_column(self._make_column(entries[h:cut]))
            h = cut
        self.n = len(entries)
        _fix_cummax(self.col_end, self.col_cummax, 0, len(self.columns))

    def _append_column(self, col: Column) -> None:
        self.columns.append(col)
        self.col_lo.append(col.lo)
        self.col_hi.append(col.hi)
        self.col_end.append(col.max_end)
        self.col_cummax.append(0)

    def _make_column(self, entries: list[Entry]) -> Column:
        """Cut the entries of one column into cells (inner loop of the build)."""
        key1, key2 = self._key1, self._key2
        col = Column()
        k1 = [key1(e) for e in entries]
        col.lo, col.hi = min(k1), max(k1)
        col.size = len(entries)
        entries = sorted(entries, key=key2)
        keys = [key2(e) for e in entries]
        h = 0
        running = 0
        for cut in _partition(keys, self.s):
            cell = sorted(entries[h:cut])
            col.cells.append(cell)
            col.cell_lo.append(keys[h])
            col.cell_hi.append(keys[cut - 1])
            end = -cell[0][0]
            col.cell_end.append(end)
            running = end if end > running else running
            col.cell_cummax.append(running)
            h = cut
        col.max_end = running
        return col

    # ------------------------------------------------------------------ query

    def query(self, q: Query, collect: bool = False) -> QueryResult:
        """Answer ``q``; set ``collect`` to also return the matching identifiers."""
        if self.order is DimensionOrder.TIME_THEN_DURATION:
            return self._query_td(q, collect)
        return self._query_dt(q, collect)

    def count(self, q: Query) -> int:
        return self.query(q).count

    def _query_td(self, q: Query, collect: bool) -> QueryResult:
        ts, te, dmin, dmax = q.bounds()
        stop = (-ts,)
        count = examined = 0
        ids = [] if collect else None
        columns, col_cummax = self.columns, self.col_cummax
        i = bisect_left(self.col_lo, te) - 1
        while i >= 0 and ts < col_cummax[i]:
            col = columns[i]
            starts_ok = col.hi < te
            cells, cell_lo, cell_hi = col.cells, col.cell_lo, col.cell_hi
            j = bisect_right(cell_lo, dmax) - 1
            while j >= 0 and cell_hi[j] >= dmin:
                cell = cells[j]
                p = bisect_left(cell, stop)
                examined += p + 1 if p < len(cell) else p
                if starts_ok and dmin <= cell_lo[j] and cell_hi[j] <= dmax:
                    count += p
                    if collect:
                        ids.extend([e[1] for e in cell[:p]])
                else:
                    for ne, ident, st in cell[:p]:
                        if st < te and dmin <= -ne - st <= dmax:
                            count += 1
                            if collect:
                                ids.append(ident)
                j -= 1
            i -= 1
        return QueryResult(count, examined, frozenset(ids) if collect else None)

    def _query_dt(self, q: Query, collect: bool) -> QueryResult:
        ts, te, dmin, dmax = q.bounds()
        stop = (-ts,)
        count = examined = 0
        ids = [] if collect else None
        columns, col_hi = self.columns, self.col_hi
        i = bisect_right(self.col_lo, dmax) - 1
        while i >= 0 and col_hi[i] >= dmin:
            col = columns[i]
            durations_ok = dmin <= col.lo and col.hi <= dmax
            cells, cell_hi, cell_cummax = col.cells, col.cell_hi, col.cell_cummax
            j = bisect_left(col.cell_lo, te) - 1
            while j >= 0 and ts < cell_cummax[j]:
                cell = cells[j]
                p = bisect_left(cell, stop)
                examined += p + 1 if p < len(cell) else p
                if durations_ok and cell_hi[j] < te:
                    count += p
                    if collect:
                        ids.extend([e[1] for e in cell[:p]])
                else:
                    for ne, ident, st in cell[:p]:
                        if st < te and dmin <= -ne - st <= dmax:
                            count += 1
                            if collect:
                                ids.append(ident)
                j -= 1
            i -= 1
        return QueryResult(count, examined, frozenset(ids) if collect else None)

    # ---------------------------------------------------------------- updates

    def insert(self, interval: Interval, ident: int) -> None:
        e = (-interval.end, ident, interval.start)
        s = self.s
        k1 = self._key1(e)
        if not self.columns:
            self._append_column(self._make_column([e]))
            self.col_cummax[0] = interval.end
            self.n = 1
            return
        i = max(bisect_right(self.col_lo, k1) - 1, 0)
        col = self.columns[i]
        self._insert_into_column(col, e)
        if k1 < col.lo:
            col.lo = k1
        if k1 > col.hi:
            col.hi = k1
        col.size += 1
        if interval.end > col.max_end:
            col.max_end = interval.end
        self.n += 1
        dirty_end = i
        if col.size > s * s and col.lo != col.hi:
            parts = _split_oversized(list(col.entries()), self._key1, s * s, s * s // 2 + 1)
            self._replace_columns(i, i + 1, [self._make_column(p) for p in parts])
            dirty_end = i + len(parts) - 1
        else:
            self.col_lo[i], self.col_hi[i], self.col_end[i] = col.lo, col.hi, col.max_end
        _fix_cummax(self.col_end, self.col_cummax, i, dirty_end)

    def _insert_into_column(self, col: Column, e: Entry) -> None:
        s = self.s
        k2 = self._key2(e)
        j = max(bisect_right(col.cell_lo, k2) - 1, 0)
        cell = col.cells[j]
        p = bisect_left(cell, e)
        if p < len(cell) and cell[p] == e:
            raise DuplicateKeyError(e[1])
        cell.insert(p, e)
        if k2 < col.cell_lo[j]:
            col.cell_lo[j] = k2
        if k2 > col.cell_hi[j]:
            col.cell_hi[j] = k2
        col.cell_end[j] = -cell[0][0]
        dirty_end = j
        if len(cell) > s and col.cell_lo[j] != col.cell_hi[j]:
            parts = _split_oversized(cell, self._key2, s, s // 2 + 1)
            self._replace_cells(col, j, j + 1, parts)
            dirty_end = j + len(parts) - 1
        _fix_cummax(col.cell_end, col.cell_cummax, j, dirty_end)

    def remove(self, interval: Interval, ident: int) -> bool:
        """Remove the entry ``(interval, ident)``; return False if it is absent."""
        e = (-interval.end, ident, interval.start)
        k1, k2 = self._key1(e), self._key2(e)
        i = bisect_right(self.col_lo, k1) - 1
        if i < 0:
            return False
        col = self.columns[i]
        j = bisect_right(col.cell_lo, k2) - 1
        if j < 0:
            return False
        cell = col.cells[j]
        p = bisect_left(cell, e)
        if p == len(cell) or cell[p] != e:
            return False
        del cell[p]
        self.n -= 1
        col.size -= 1
        self._after_cell_removal(col, j, k2)
        if col.size == 0:
            self._replace_columns(i, i + 1, [])
            if i < len(self.columns):
                _fix_cummax(self.col_end, self.col_cummax, i, i)
            return True
        if k1 == col.lo or k1 == col.hi:
            keys = [self._key1(x) for x in col.entries()]
            col.lo, col.hi = min(keys), max(keys)
        col.max_end = max(col.cell_end)
        self.col_lo[i], self.col_hi[i], self.col_end[i] = col.lo, col.hi, col.max_end
        first = i
        limit = self.s * self.s
        left = self.columns[i - 1].size if i > 0 else None
        right = self.columns[i + 1].size if i + 1 < len(self.columns) else None
        merge_with = None
        if left is not None and col.size + left < limit:
            merge_with = i - 1
        if right is not None and col.size + right < limit and (merge_with is None or right < left):
            merge_with = i + 1
        if merge_with is not None:
            a = min(i, merge_with)
            merged = list(self.columns[a].entries()) + list(self.columns[a + 1].entries())
            self._replace_columns(a, a + 2, [self._make_column(merged)])
            first = a
        _fix_cummax(self.col_end, self.col_cummax, first, first)
        return True

    def _after_cell_removal(self, col: Column, j: int, k2: int) -> None:
        cell = col.cells[j]
        if not cell:
            self._replace_cells(col, j, j + 1, [])
            if j < len(col.cells):
                _fix_cummax(col.cell_end, col.cell_cummax, j, j)
            return
        if k2 == col.cell_lo[j] or k2 == col.cell_hi[j]:
            keys = [self._key2(x) for x in cell]
            col.cell_lo[j], col.cell_hi[j] = min(keys), max(keys)
        col.cell_end[j] = -cell[0][0]
        first = j
        sizes = [len(c) for c in col.cells]
        left = sizes[j - 1] if j > 0 else None
        right = sizes[j + 1] if j + 1 < len(sizes) else None
        merge_with = None
        if left is not None and len(cell) + left < self.s:
            merge_with = j - 1
        if right is not None and len(cell) + right < self.s and (merge_with is None or right < left):
            merge_with = j + 1
        if merge_with is not None:
            a = min(j, merge_with)
            self._replace_cells(col, a, a + 2, [col.cells[a] + col.cells[a + 1]])
            first = a
        _fix_cummax(col.cell_end, col.cell_cummax, first, first)

    def _replace_cells(self, col: Column, a: int, b: int, groups: list[list[Entry]]) -> None:
        key2 = self._key2
        cells, lo, hi, end = [], [], [], []
        for g in groups:
            g = sorted(g)
            keys = [key2(x) for x in g]
            cells.append(g)
            lo.append(min(keys))
            hi.append(max(keys))
            end.append(-g[0][0])
        col.cells[a:b] = cells
        col.cell_lo[a:b] = lo
        col.cell_hi[a:b] = hi
        col.cell_end[a:b] = end
        col.cell_cummax[a:b] = [0] * len(groups)

    def _replace_columns(self, a: int, b: int, cols: list[Column]) -> None:
        self.columns[a:b] = cols
        self.col_lo[a:b] = [c.lo for c in cols]
        self.col_hi[a:b] = [c.hi for c in cols]
        self.col_end[a:b] = [c.max_end for c in cols]
        self.col_cummax[a:b] = [0] * len(cols)

    # ------------------------------------------------------------- inspection

    def __len__(self) -> int:
        return self.n

    def __iter__(self) -> Iterable[tuple[Interval, int]]:
        for col in self.columns:
            for ne, ident, st in col.entries():
                yield Interval(st, -ne), ident

    def stats(self) -> IndexStats:
        s = self.s
        n_cols = len(self.columns)
        n_cells = sum(len(c.cells) for c in self.columns)
        heavy_cols = sum(1 for c in self.columns if c.size > s * s)
        heavy_cells = sum(1 for c in self.columns for cell in c.cells if len(cell) > s)
        if self.n:
            total = (INTERVAL_BYTES * self.n
                     + SLOT_BYTES * (COLUMN_SLOTS * n_cols + CELL_SLOTS * n_cells)
                     + HEADER_BYTES * (n_cols + n_cells))
            bpi = total / self.n
        else:
            bpi = 0.0
        return IndexStats(n_cols, n_cells, heavy_cols, heavy_cells, bpi, self.build_millis)

    def check_invariants(self) -> list[str]:
        """Walk the whole structure and describe every violated invariant."""
        problems = []
        s, key1, key2 = self.s, self._key1, self._key2
        seen = set()
        total = 0
        running = 0
        arrays = (self.col_lo, self.col_hi, self.col_end, self.col_cummax)
        if any(len(a) != len(self.columns) for a in arrays):
            return ["column ancillary arrays out of sync with columns"]
        for i, col in enumerate(self.columns):
            where = f"column {i}"
            if not col.cells:
                problems.append(f"{where}: empty")
                continue
            entries = list(col.entries())
            k1 = [key1(e) for e in entries]
            if col.size != len(entries):
                problems.append(f"{where}: size {col.size} != {len(entries)} stored entries")
            if (min(k1), max(k1)) != (col.lo, col.hi) or (col.lo, col.hi) != (self.col_lo[i], self.col_hi[i]):
                problems.append(f"{where}: key bounds out of date")
            if i + 1 < len(self.columns) and not col.hi < self.col_lo[i + 1]:
                problems.append(f"{where}: keys overlap the next column")
            heavy_col = len(entries) > s * s
            if heavy_col and col.lo != col.hi:
                problems.append(f"{where}: heavy column with several keys")
            cell_arrays = (col.cell_lo, col.cell_hi, col.cell_end, col.cell_cummax)
            if any(len(a) != len(col.cells) for a in cell_arrays):
                problems.append(f"{where}: cell ancillary arrays out of sync")
                continue
            cell_running = 0
            for j, cell in enumerate(col.cells):
                cw = f"{where} cell {j}"
                if not cell:
                    problems.append(f"{cw}: empty")
                    continue
                k2 = [key2(e) for e in cell]
                if (min(k2), max(k2)) != (col.cell_lo[j], col.cell_hi[j]):
                    problems.append(f"{cw}: key bounds out of date")
                if j + 1 < len(col.cells) and not col.cell_hi[j] < col.cell_lo[j + 1]:
                    problems.append(f"{cw}: keys overlap the next cell")
                if len(cell) > s and col.cell_lo[j] != col.cell_hi[j]:
                    problems.append(f"{cw}: heavy cell with several keys")
                if any(cell[x] > cell[x + 1] for x in range(len(cell) - 1)):
                    problems.append(f"{cw}: entries not sorted by decreasing end")
                if col.cell_end[j] != -cell[0][0]:
                    problems.append(f"{cw}: max end out of date")
                cell_running = max(cell_running, col.cell_end[j])
                if col.cell_cummax[j] != cell_running:
                    problems.append(f"{cw}: cumulative max end out of date")
                if heavy_col and len(cell) > s and len({(e[0], e[2]) for e in cell}) != 1:
                    problems.append(f"{cw}: heavy cell in heavy column holds distinct intervals")
            if col.max_end != cell_running or self.col_end[i] != cell_running:
                problems.append(f"{where}: max end out of date")
            running = max(running, cell_running)
            if self.col_cummax[i] != running:
                problems.append(f"{where}: cumulative max end out of date")
            for e in entries:
                if e[1] in seen:
                    problems.append(f"{where}: duplicate identifier {e[1]}")
                seen.add(e[1])
            total += len(entries)
        if total != self.n:
            problems.append(f"stored {total} entries but n = {self.n}")
        return problems


def build(relation: Relation, s: int, order=DimensionOrder.DURATION_THEN_TIME) -> RDIndex:
    return RDIndex.build(relation, s, order)
