"""RD-index: a data-adaptive grid over start time and duration for temporal intervals."""

from .core import (
    DURATION_ONLY, QUERY_KINDS, RANGE_DURATION, RANGE_ONLY, TIME_MAX, ConfigError, DurationRange,
    Interval, Query, QueryResult, Relation, TimeRange, duration, matches, overlaps,
)
from .rd_index import DimensionOrder, DuplicateKeyError, IndexStats, RDIndex, build, next_subseq
from .baselines import (
    BACKENDS, BTreeBackend, Backend, GridFileBackend, GridFileParams, IntervalTreeBackend, LinearScan,
    RDIndexBackend, linear_scan, make_backend,
)
from .workload import (
    DataSpec, DatasetError, Domain, MixFractions, QuerySpec, Uniform, Zipf, gen_mixed, gen_queries,
    gen_relation, load_relation, save_relation, scale_dataset, selectivity_grid_queries,
)
from .bench import (
    DatasetSpec, RunConfig, RunReport, VerificationError, WorkloadSpec, examined_fraction,
    mixed_throughput, run, run_updates, write_csv,
)

__version__ = "0.1.0"
