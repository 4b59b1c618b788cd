"""Benchmark runner: build a backend, time its queries, report rows as CSV."""

from __future__ import annotations

import contextlib
import csv
import datetime as dt
import gc
import math
import platform
import random
import subprocess
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .baselines import Backend, linear_scan, make_backend
from .core import (
    QUERY_KINDS, RANGE_DURATION, ConfigError, Interval, Query, Relation,
)
from .workload import (
    DataSpec, Domain, MixFractions, QuerySpec, gen_mixed, gen_queries, gen_relation,
    load_relation, scale_dataset, selectivity_grid_queries,
)

CSV_HEADER = ["backend", "params", "dataset", "workload", "query_id", "kind", "k", "examined",
              "latency_ns", "qps", "build_ms", "bytes_per_interval"]
UPDATE_HEADER = ["backend", "params", "dataset", "phase", "batch", "ops", "size_after",
                 "seconds", "ops_per_sec"]
SUMMARY = "summary"
BEST = "best"


class VerificationError(AssertionError):
    """A backend disagreed with the linear-scan oracle."""

    def __init__(self, backend: str, workload: str, query_id: int, query: Query, expected: int, got: int):
        self.backend, self.workload, self.query_id = backend, workload, query_id
        self.expected, self.got = expected, got
        super().__init__(
            f"{backend} on {workload} query {query_id} ({query}): expected {expected} matches, got {got}"
        )


# ------------------------------------------------------------------ config

@dataclass(frozen=True)
class DatasetSpec:
    name: str
    data: Optional[DataSpec] = None
    path: Optional[str] = None
    scale: int = 1

    def __post_init__(self):
        if (self.data is None) == (self.path is None):
            raise ConfigError(f"dataset {self.name!r} needs exactly one of a generator spec or a path")

    def load(self) -> Relation:
        r = gen_relation(self.data) if self.data is not None else load_relation(self.path)
        return scale_dataset(r, self.scale) if self.scale != 1 else r


@dataclass(frozen=True)
class WorkloadSpec:
    """A named query set: one query kind, a mix of kinds, or a selectivity grid."""

    name: str
    kind: str = RANGE_DURATION  # a query kind, "mixed" or "grid"
    count: int = 100
    grid: int = 32
    fractions: Optional[MixFractions] = None
    range_len: Optional[tuple[int, int]] = None
    dur_width: Optional[tuple[int, int]] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in QUERY_KINDS + ("mixed", "grid"):
            raise ConfigError(f"unknown workload kind {self.kind!r}")

    def queries(self, r: Relation) -> list[Query]:
        if self.kind == "grid":
            return [g.query for g in selectivity_grid_queries(r, self.grid, seed=self.seed)]
        domain = Domain.of(r)
        if self.kind == "mixed":
            fr = self.fractions or MixFractions(Fraction(1, 3), Fraction(1, 3), Fraction(1, 3))
            spec = QuerySpec(self.count, RANGE_DURATION, self.range_len, self.dur_width, self.seed)
            return gen_mixed(spec, fr, domain)
        return gen_queries(QuerySpec(self.count, self.kind, self.range_len, self.dur_width, self.seed), domain)


@dataclass(frozen=True)
class RunConfig:
    backend: str
    dataset: DatasetSpec
    workloads: tuple[WorkloadSpec, ...]
    params: Mapping = field(default_factory=dict)
    repetitions: int = 1
    warmup: int = 1
    verify: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.warmup < 0:
            raise ConfigError(f"warmup must be >= 0, got {self.warmup}")


# ------------------------------------------------------------------ report

@dataclass(frozen=True)
class QueryRow:
    backend: str
    params: str
    dataset: str
    workload: str
    query_id: Union[int, str]
    kind: str
    k: int
    examined: int
    latency_ns: float
    qps: float
    build_ms: float
    bytes_per_interval: float

    def as_csv(self) -> list:
        return [self.backend, self.params, self.dataset, self.workload, self.query_id, self.kind,
                self.k, self.examined, f"{self.latency_ns:.1f}", f"{self.qps:.3f}",
                f"{self.build_ms:.3f}", f"{self.bytes_per_interval:.4f}"]


@dataclass
class RunReport:
    rows: list[QueryRow] = field(default_factory=list)
    n: int = 0
    environment: dict = field(default_factory=dict)

    def queries(self, workload: Optional[str] = None) -> list[QueryRow]:
        return [r for r in self.rows if r.query_id not in (SUMMARY, BEST)
                and (workload is None or r.workload == workload)]

    def summaries(self) -> list[QueryRow]:
        return [r for r in self.rows if r.query_id == SUMMARY]

    def summary(self, workload: str) -> QueryRow:
        for r in self.summaries():
            if r.workload == workload:
                return r
        raise KeyError(workload)

    def extend(self, other: "RunReport") -> None:
        self.rows.extend(other.rows)
        self.environment = self.environment or other.environment


def environment() -> dict:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5).stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        rev = "unknown"
    return {
        "host": platform.node(),
        "python": platform.python_version(),
        "timestamp": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
        "git_revision": rev,
    }


@contextlib.contextmanager
def gc_paused(enabled: bool = True):
    """Keep the cyclic garbage collector out of a timed region, as ``timeit`` does.

    Its full passes scan the whole heap, so with a large index in memory they
    land on whichever batch or query happens to cross the allocation threshold.
    """
    was_enabled = gc.isenabled()
    if enabled:
        gc.collect()
        gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


def time_queries(backend: Backend, queries: Sequence[Query], repetitions: int = 1,
                 warmup: int = 1, pause_gc: bool = True) -> list[tuple[int, int, float]]:
    """Return ``(k, examined, mean latency in ns)`` for each query."""
    for _ in range(warmup):
        for q in queries:
            backend.query(q)
    out = []
    clock = time.perf_counter_ns
    with gc_paused(pause_gc):
        for q in queries:
            t0 = clock()
            for _ in range(repetitions):
                res = backend.query(q)
            elapsed = clock() - t0
            out.append((res.count, res.examined, elapsed / repetitions))
    return out


def run(config: RunConfig, relation: Optional[Relation] = None,
        queries: Optional[Mapping[str, Sequence[Query]]] = None) -> RunReport:
    """Build the configured backend once and time every workload against it.

    ``relation`` and ``queries`` may be passed in to share them between runs.
    """
    if relation is None:
        relation = config.dataset.load()
    queries = dict(queries or {})
    for w in config.workloads:
        if w.name not in queries:
            queries[w.name] = w.queries(relation)
    try:
        backend = make_backend(config.backend, relation, **dict(config.params))
    except ConfigError:
        raise
    except Exception as exc:
        raise RuntimeError(f"building {config.backend} ({dict(config.params)}) on "
                           f"{config.dataset.name} failed: {exc}") from exc
    st = backend.stats()
    params = backend.params()
    report = RunReport(n=len(relation), environment=environment())
    for w in config.workloads:
        qs = queries[w.name]
        if config.verify:
            verify(backend, relation, qs, w.name)
        timings = time_queries(backend, qs, config.repetitions, config.warmup)
        total_ns = 0.0
        total_k = total_ex = 0
        for qid, (q, (k, ex, lat)) in enumerate(zip(qs, timings)):
            report.rows.append(QueryRow(config.backend, params, config.dataset.name, w.name, qid, q.kind,
                                        k, ex, lat, 1e9 / lat if lat > 0 else math.inf,
                                        st.build_millis, st.bytes_per_interval))
            total_ns += lat
            total_k += k
            total_ex += ex
        mean = total_ns / len(qs) if qs else 0.0
        qps = len(qs) / (total_ns / 1e9) if total_ns > 0 else 0.0
        report.rows.append(QueryRow(config.backend, params, config.dataset.name, w.name, SUMMARY, w.kind,
                                    total_k, total_ex, mean, qps, st.build_millis, st.bytes_per_interval))
    return report


def verify(backend: Backend, relation: Relation, queries: Sequence[Query], workload: str = "") -> None:
    """Compare every answer of ``backend`` with the linear-scan oracle."""
    for qid, q in enumerate(queries):
        expected = linear_scan(relation, q)
        got = backend.query(q, collect=True)
        if got.matches != expected.matches or got.count != expected.count:
            raise VerificationError(backend.name, workload, qid, q, expected.count, got.count)


def best_rows(rows: Sequence[QueryRow]) -> list[QueryRow]:
    """Highest-throughput summary per (backend, dataset, workload) across parameter sweeps."""
    best: dict[tuple, QueryRow] = {}
    for r in rows:
        if r.query_id != SUMMARY:
            continue
        key = (r.backend, r.dataset, r.workload)
        if key not in best or r.qps > best[key].qps:
            best[key] = r
    return [QueryRow(**{**r.__dict__, "query_id": BEST}) for r in best.values()]


# ----------------------------------------------------------------- metrics

def mixed_throughput(phi: Mapping[str, float], f: MixFractions) -> float:
    """Weighted harmonic mean of per-kind throughputs for a query mix."""
    total = 0.0
    for kind, frac in f.as_dict().items():
        if frac == 0:
            continue
        rate = phi.get(kind, 0.0)
        if not rate > 0:
            raise ValueError(f"throughput for {kind} must be > 0 when its fraction is {frac}")
        total += float(frac) / rate
    return 1.0 / total


def examined_fraction(report: RunReport, n: Optional[int] = None) -> list[float]:
    n = report.n if n is None else n
    if n <= 0:
        raise ValueError("dataset size must be > 0")
    return [r.examined / n for r in report.queries()]


# --------------------------------------------------------------------- csv

def write_csv(report: RunReport, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for r in report.rows:
                w.writerow(r.as_csv())
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ----------------------------------------------------------------- updates

@dataclass(frozen=True)
class UpdateRow:
    backend: str
    params: str
    dataset: str
    phase: str
    batch: int
    ops: int
    size_after: int
    seconds: float

    @property
    def ops_per_sec(self) -> float:
        return self.ops / self.seconds if self.seconds > 0 else math.inf

    def as_csv(self) -> list:
        return [self.backend, self.params, self.dataset, self.phase, self.batch, self.ops,
                self.size_after, f"{self.seconds:.6f}", f"{self.ops_per_sec:.3f}"]


def run_updates(backend_name: str, relation: Relation, batch_size: int, insert_order: str = "random",
                seed: int = 0, drain: bool = False, check_every: int = 0, dataset: str = "",
                pause_gc: bool = True, **params) -> tuple[Backend, list[UpdateRow]]:
    """Insert ``relation`` into an empty backend in timed batches, then optionally drain it.

    ``insert_order`` is ``"random"`` or ``"sorted"`` (by start time). With
    ``check_every`` > 0 and an RD-index backend, structural invariants are
    checked (untimed) after every ``check_every``-th removal.
    """
    if batch_size < 1:
        raise ConfigError("batch size must be >= 1")
    backend = make_backend(backend_name, Relation.empty(), **params)
    if not backend.supports_updates:
        raise ConfigError(f"{backend_name} does not support updates")
    items = list(zip(relation.start.tolist(), relation.end.tolist(), relation.ident.tolist()))
    if insert_order == "sorted":
        items.sort()
    elif insert_order == "random":
        random.Random(seed).shuffle(items)
    else:
        raise ConfigError(f"unknown insertion order {insert_order!r}")
    rows = []
    label = backend.params()
    for b, lo in enumerate(range(0, len(items), batch_size)):
        batch = [(Interval(s, e), i) for s, e, i in items[lo:lo + batch_size]]
        with gc_paused(pause_gc):
            t0 = time.perf_counter()
            for iv, i in batch:
                backend.insert(iv, i)
            elapsed = time.perf_counter() - t0
        rows.append(UpdateRow(backend_name, label, dataset, "insert", b, len(batch), len(backend), elapsed))
    if drain:
        ids = [i for _, _, i in items]
        random.Random(seed + 1).shuffle(ids)
        index = getattr(backend, "index", None)
        for b, lo in enumerate(range(0, len(ids), batch_size)):
            chunk = ids[lo:lo + batch_size]
            elapsed = 0.0
            with gc_paused(pause_gc):
                for x, i in enumerate(chunk):
                    t0 = time.perf_counter()
                    ok = backend.remove(i)
                    elapsed += time.perf_counter() - t0
                    if not ok:
                        raise AssertionError(f"removal of {i} reported absent")
                    if check_every and index is not None and (lo + x + 1) % check_every == 0:
                        problems = index.check_invariants()
                        if problems:
                            raise AssertionError(f"invariants broken after removing {i}: {problems[:3]}")
            rows.append(UpdateRow(backend_name, label, dataset, "remove", b, len(chunk), len(backend),
                                  elapsed))
    return backend, rows


def write_update_csv(rows: Sequence[UpdateRow], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(UPDATE_HEADER)
        for r in rows:
            w.writerow(r.as_csv())
    return path
