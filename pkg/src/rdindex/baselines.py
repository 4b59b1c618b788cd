"""Index backends behind one interface, including the linear-scan oracle.

Every backend answers count queries and, on request, the set of matching
identifiers. ``examined`` in each result is the number of stored entries the
backend looked at, so backends can be compared independently of their
speed.
"""

from __future__ import annotations

import math
import time
from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ConfigError, Interval, Query, QueryResult, Relation
from .rd_index import (
    HEADER_BYTES, INTERVAL_BYTES, SLOT_BYTES, Column, DimensionOrder, DuplicateKeyError,
    IndexStats, RDIndex,
)

# pointer-based nodes: two child pointers plus bookkeeping
NODE_BYTES = 48
POINTER_BYTES = 8


class Backend:
    """Common contract: ``build``, ``query``, ``stats`` and optional updates."""

    name = "backend"
    supports_updates = False

    def __init__(self):
        self.build_millis = 0.0
        self._relation: Optional[Relation] = None
        self._intervals: Optional[dict[int, Interval]] = None
        self._size = 0

    @classmethod
    def build(cls, relation: Relation, **params) -> "Backend":
        t0 = time.perf_counter()
        backend = cls(**params)
        backend._build(relation)
        backend.build_millis = (time.perf_counter() - t0) * 1e3
        backend._relation = relation
        backend._size = len(relation)
        return backend

    def _build(self, relation: Relation) -> None:
        raise NotImplementedError

    def query(self, q: Query, collect: bool = False) -> QueryResult:
        raise NotImplementedError

    def stats(self) -> IndexStats:
        raise NotImplementedError

    def params(self) -> str:
        return ""

    def __len__(self) -> int:
        return self._size

    # Updates go through an identifier -> interval side map, so that callers
    # can remove by identifier alone. The map is only materialised once the
    # first update arrives.

    def _side_map(self) -> dict[int, Interval]:
        if self._intervals is None:
            r = self._relation
            self._intervals = {} if r is None else {
                i: Interval(s, e) for s, e, i in zip(r.start.tolist(), r.end.tolist(), r.ident.tolist())
            }
            self._relation = None
        return self._intervals

    def insert(self, interval: Interval, ident: int) -> None:
        if not self.supports_updates:
            raise NotImplementedError(f"{self.name} is static")
        side = self._side_map()
        if ident in side:
            raise DuplicateKeyError(ident)
        self._insert(interval, ident)
        side[ident] = interval
        self._size += 1

    def remove(self, ident: int) -> bool:
        if not self.supports_updates:
            raise NotImplementedError(f"{self.name} is static")
        interval = self._side_map().pop(ident, None)
        if interval is None:
            return False
        removed = self._remove(interval, ident)
        assert removed, f"side map and index disagree on {ident}"
        self._size -= 1
        return True

    def _insert(self, interval: Interval, ident: int) -> None:
        raise NotImplementedError

    def _remove(self, interval: Interval, ident: int) -> bool:
        raise NotImplementedError


# --------------------------------------------------------------- linear scan

class LinearScan(Backend):
    name = "linear-scan"
    supports_updates = True

    def __init__(self):
        super().__init__()
        self.rows: dict[int, tuple[int, int]] = {}

    def _build(self, relation):
        self.rows = {
            i: (s, e)
            for s, e, i in zip(relation.start.tolist(), relation.end.tolist(), relation.ident.tolist())
        }

    def query(self, q, collect=False):
        ts, te, dmin, dmax = q.bounds()
        ids = [] if collect else None
        count = 0
        for ident, (s, e) in self.rows.items():
            if e > ts and s < te and dmin <= e - s <= dmax:
                count += 1
                if collect:
                    ids.append(ident)
        return QueryResult(count, len(self.rows), frozenset(ids) if collect else None)

    def stats(self):
        return IndexStats(0, 0, 0, 0, float(INTERVAL_BYTES) if self.rows else 0.0, self.build_millis)

    def _insert(self, interval, ident):
        self.rows[ident] = (interval.start, interval.end)

    def _remove(self, interval, ident):
        return self.rows.pop(ident, None) is not None


def linear_scan(relation: Relation, q: Query, collect: bool = True) -> QueryResult:
    """Filter ``relation`` by ``q`` exhaustively."""
    mask = relation.match_mask(q)
    count = int(mask.sum())
    matches = frozenset(relation.ident[mask].tolist()) if collect else None
    return QueryResult(count, len(relation), matches)


# ------------------------------------------------------- duration-keyed map

class BTreeBackend(Backend):
    """Ordered map from duration to the bucket of intervals with that duration.

    Keys live in a sorted list searched by bisection; a duration range is an
    in-order walk over the key range. Range constraints are checked per entry.
    """

    name = "btree"
    supports_updates = True

    def __init__(self):
        super().__init__()
        self.keys: list[int] = []
        self.buckets: dict[int, list[tuple[int, int, int]]] = {}

    def _build(self, relation):
        buckets = {}
        for s, e, i in zip(relation.start.tolist(), relation.end.tolist(), relation.ident.tolist()):
            buckets.setdefault(e - s, []).append((s, e, i))
        self.buckets = buckets
        self.keys = sorted(buckets)

    def query(self, q, collect=False):
        ts, te, dmin, dmax = q.bounds()
        keys, buckets = self.keys, self.buckets
        count = examined = 0
        ids = [] if collect else None
        unbounded = q.range is None
        for x in range(bisect_left(keys, dmin), bisect_right(keys, dmax)):
            bucket = buckets[keys[x]]
            examined += len(bucket)
            if unbounded:
                count += len(bucket)
                if collect:
                    ids.extend([b[2] for b in bucket])
                continue
            for s, e, i in bucket:
                if e > ts and s < te:
                    count += 1
                    if collect:
                        ids.append(i)
        return QueryResult(count, examined, frozenset(ids) if collect else None)

    def bucket_sizes(self) -> dict[int, int]:
        return {k: len(v) for k, v in self.buckets.items()}

    def stats(self):
        n = sum(len(b) for b in self.buckets.values())
        if not n:
            return IndexStats(0, 0, 0, 0, 0.0, self.build_millis)
        total = n * (INTERVAL_BYTES + POINTER_BYTES) + len(self.keys) * (NODE_BYTES + SLOT_BYTES)
        return IndexStats(0, len(self.keys), 0, 0, total / n, self.build_millis)

    def _insert(self, interval, ident):
        d = interval.duration
        if d not in self.buckets:
            insort(self.keys, d)
            self.buckets[d] = []
        self.buckets[d].append((interval.start, interval.end, ident))

    def _remove(self, interval, ident):
        d = interval.duration
        bucket = self.buckets.get(d)
        if bucket is None:
            return False
        try:
            bucket.remove((interval.start, interval.end, ident))
        except ValueError:
            return False
        if not bucket:
            del self.buckets[d]
            del self.keys[bisect_left(self.keys, d)]
        return True


# ------------------------------------------------------------- interval tree

class _Node:
    __slots__ = ("center", "by_start", "by_end", "left", "right")

    def __init__(self, center: int):
        self.center = center
        self.by_start: list[tuple[int, int, int]] = []  # (start, end, id) ascending
        self.by_end: list[tuple[int, int, int]] = []  # (-end, start, id) ascending
        self.left: Optional[_Node] = None
        self.right: Optional[_Node] = None


class IntervalTreeBackend(Backend):
    """Centered interval tree over the timeline.

    Each node keeps the intervals containing its center twice: by ascending
    start and by descending end. Duration constraints are checked per
    candidate, so they never prune the traversal.
    """

    name = "interval-tree"
    supports_updates = True

    def __init__(self):
        super().__init__()
        self.root: Optional[_Node] = None
        self.nodes = 0

    def _build(self, relation):
        self.nodes = 0
        self.root = None
        if len(relation) == 0:
            return
        # explicit stack of (start, end, ident, parent, side)
        stack = [(relation.start, relation.end, relation.ident, None, None)]
        while stack:
            s, e, ids, parent, side = stack.pop()
            # median of all endpoints, ends taken as the last covered point
            points = np.concatenate([s, e - 1])
            c = int(np.partition(points, len(points) // 2)[len(points) // 2])
            node = _Node(c)
            self.nodes += 1
            left = e <= c
            right = s > c
            here = ~(left | right)
            hs, he, hi = s[here].tolist(), e[here].tolist(), ids[here].tolist()
            node.by_start = sorted(zip(hs, he, hi))
            node.by_end = sorted(zip([-x for x in he], hs, hi))
            if parent is None:
                self.root = node
            else:
                setattr(parent, side, node)
            if left.any():
                stack.append((s[left], e[left], ids[left], node, "left"))
            if right.any():
                stack.append((s[right], e[right], ids[right], node, "right"))

    def query(self, q, collect=False):
        ts, te, dmin, dmax = q.bounds()
        count = examined = 0
        ids = [] if collect else None
        no_dur = q.duration is None
        stack = [self.root] if self.root is not None else []
        while stack:
            node = stack.pop()
            c = node.center
            if c < ts:
                # every interval here starts before ts: keep those ending after it
                entries = node.by_end
                p = bisect_left(entries, (-ts,))
                examined += p + 1 if p < len(entries) else p
                if no_dur:
                    count += p
                    if collect:
                        ids.extend([x[2] for x in entries[:p]])
                else:
                    for ne, s, i in entries[:p]:
                        if dmin <= -ne - s <= dmax:
                            count += 1
                            if collect:
                                ids.append(i)
                if node.right is not None:
                    stack.append(node.right)
            elif c >= te:
                # every interval here ends after te: keep those starting before it
                entries = node.by_start
                p = bisect_left(entries, (te,))
                examined += p + 1 if p < len(entries) else p
                if no_dur:
                    count += p
                    if collect:
                        ids.extend([x[2] for x in entries[:p]])
                else:
                    for s, e, i in entries[:p]:
                        if dmin <= e - s <= dmax:
                            count += 1
                            if collect:
                                ids.append(i)
                if node.left is not None:
                    stack.append(node.left)
            else:
                entries = node.by_start
                examined += len(entries)
                if no_dur:
                    count += len(entries)
                    if collect:
                        ids.extend([x[2] for x in entries])
                else:
                    for s, e, i in entries:
                        if dmin <= e - s <= dmax:
                            count += 1
                            if collect:
                                ids.append(i)
                if node.left is not None:
                    stack.append(node.left)
                if node.right is not None:
                    stack.append(node.right)
        return QueryResult(count, examined, frozenset(ids) if collect else None)

    def stats(self):
        n = len(self)
        if not n:
            return IndexStats(0, 0, 0, 0, 0.0, self.build_millis)
        # each interval sits in two sorted lists
        total = n * (2 * INTERVAL_BYTES + 2 * POINTER_BYTES) + self.nodes * (NODE_BYTES + SLOT_BYTES)
        return IndexStats(0, self.nodes, 0, 0, total / n, self.build_millis)

    def _insert(self, interval, ident):
        s, e = interval.start, interval.end
        node, parent, side = self.root, None, None
        while node is not None:
            if e - 1 < node.center:
                parent, side, node = node, "left", node.left
            elif s > node.center:
                parent, side, node = node, "right", node.right
            else:
                break
        if node is None:
            node = _Node((s + e - 1) // 2)
            self.nodes += 1
            if parent is None:
                self.root = node
            else:
                setattr(parent, side, node)
        insort(node.by_start, (s, e, ident))
        insort(node.by_end, (-e, s, ident))

    def _remove(self, interval, ident):
        s, e = interval.start, interval.end
        node = self.root
        while node is not None:
            if e - 1 < node.center:
                node = node.left
            elif s > node.center:
                node = node.right
            else:
                a = (s, e, ident)
                b = (-e, s, ident)
                p = bisect_left(node.by_start, a)
                r = bisect_left(node.by_end, b)
                if p == len(node.by_start) or node.by_start[p] != a:
                    return False
                del node.by_start[p]
                del node.by_end[r]
                return True
        return False


# ----------------------------------------------------------------- grid file

@dataclass(frozen=True)
class GridFileParams:
    time_cells: int
    duration_cells: int

    def __post_init__(self):
        if self.time_cells < 1 or self.duration_cells < 1:
            raise ConfigError(f"grid file needs >= 1 cell per dimension, got {self}")

    @classmethod
    def default(cls, n: int, s_ref: int = 200) -> "GridFileParams":
        k = max(1, math.ceil(math.sqrt(n / s_ref)))
        return cls(k, k)


class GridFileBackend(Backend):
    """Equal-width grid over the (start, duration) bounding box of the data.

    The layout mirrors the RD-index with start time first (columns of start
    times, cells of durations, entries by decreasing end), so it is queried
    with the same traversal; only the boundaries ignore the data distribution.
    Empty grid cells are not stored.
    """

    name = "grid-file"

    def __init__(self, time_cells: Optional[int] = None, duration_cells: Optional[int] = None):
        super().__init__()
        self.time_cells = time_cells
        self.duration_cells = duration_cells
        self.grid: Optional[RDIndex] = None

    def params(self):
        return f"time_cells={self.time_cells};duration_cells={self.duration_cells}"

    def _build(self, relation):
        if self.time_cells is None or self.duration_cells is None:
            p = GridFileParams.default(len(relation))
            self.time_cells = self.time_cells or p.time_cells
            self.duration_cells = self.duration_cells or p.duration_cells
        GridFileParams(self.time_cells, self.duration_cells)
        # reuse the RD-index layout and traversal; s plays no role here
        grid = RDIndex(1, DimensionOrder.TIME_THEN_DURATION)
        self.grid = grid
        if len(relation) == 0:
            return
        starts, ends, ids = relation.start.tolist(), relation.end.tolist(), relation.ident.tolist()
        s_lo, s_hi = min(starts), max(starts)
        durs = [e - s for s, e in zip(starts, ends)]
        d_lo, d_hi = min(durs), max(durs)
        s_w = (s_hi - s_lo) // self.time_cells + 1
        d_w = (d_hi - d_lo) // self.duration_cells + 1
        buckets: dict[int, dict[int, list]] = {}
        for s, e, i, d in zip(starts, ends, ids, durs):
            buckets.setdefault((s - s_lo) // s_w, {}).setdefault((d - d_lo) // d_w, []).append((-e, i, s))
        for a in sorted(buckets):
            col = Column()
            col_entries = buckets[a]
            col.lo = s_lo + a * s_w
            col.hi = max(x[2] for cell in col_entries.values() for x in cell)
            running = 0
            for b in sorted(col_entries):
                cell = sorted(col_entries[b])
                col.cells.append(cell)
                col.cell_lo.append(d_lo + b * d_w)
                col.cell_hi.append(max(-ne - s for ne, _, s in cell))
                col.cell_end.append(-cell[0][0])
                running = max(running, -cell[0][0])
                col.cell_cummax.append(running)
                col.size += len(cell)
            col.max_end = running
            grid._append_column(col)
        grid.n = len(relation)
        running = 0
        for k, end in enumerate(grid.col_end):
            running = max(running, end)
            grid.col_cummax[k] = running

    def query(self, q, collect=False):
        return self.grid.query(q, collect)

    def stats(self):
        n = self.grid.n
        if not n:
            return IndexStats(0, 0, 0, 0, 0.0, self.build_millis)
        # a grid file allocates every cell of the directory, empty or not
        slots = self.time_cells * self.duration_cells
        total = n * INTERVAL_BYTES + slots * (HEADER_BYTES + 2 * SLOT_BYTES) + self.time_cells * 2 * SLOT_BYTES
        cells = sum(len(c.cells) for c in self.grid.columns)
        return IndexStats(len(self.grid.columns), cells, 0, 0, total / n, self.build_millis)


# ------------------------------------------------------------------ RD-index

class RDIndexBackend(Backend):
    name = "rd-index"
    supports_updates = True

    def __init__(self, s: int = 200, order="dt"):
        super().__init__()
        self.index = RDIndex(s, order)

    def params(self):
        return f"s={self.index.s};order={self.index.order.value}"

    def _build(self, relation):
        self.index = RDIndex.build(relation, self.index.s, self.index.order)

    def query(self, q, collect=False):
        return self.index.query(q, collect)

    def stats(self):
        st = self.index.stats()
        return IndexStats(st.columns, st.cells, st.heavy_columns, st.heavy_cells,
                          st.bytes_per_interval, self.build_millis)

    def _insert(self, interval, ident):
        self.index.insert(interval, ident)

    def _remove(self, interval, ident):
        return self.index.remove(interval, ident)


BACKENDS = {
    "rd-index": RDIndexBackend,
    "linear-scan": LinearScan,
    "btree": BTreeBackend,
    "interval-tree": IntervalTreeBackend,
    "grid-file": GridFileBackend,
}


def make_backend(name: str, relation: Relation, **params) -> Backend:
    try:
        cls = BACKENDS[name]
    except KeyError:
        raise ConfigError(f"unknown backend {name!r}; expected one of {sorted(BACKENDS)}") from None
    return cls.build(relation, **params)
