"""Command-line entry point: ``rdindex generate | bench | update-bench | query``.

Experiments are described in a TOML file; ``configs/`` in the repository holds
annotated examples.
"""

from __future__ import annotations

import argparse
import itertools
import sys
from fractions import Fraction
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .baselines import BACKENDS, make_backend
from .bench import (
    DatasetSpec, RunConfig, VerificationError, WorkloadSpec, best_rows, run, run_updates,
    write_csv, write_update_csv, RunReport,
)
from .core import ConfigError, Query
from .workload import (
    DataSpec, DatasetError, MixFractions, Uniform, Zipf, gen_relation, load_relation, save_relation,
)

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2


def parse_dist(value) -> Uniform | Zipf:
    """``"uniform:LO:HI"`` / ``"zipf:BETA:MAX"`` or the equivalent TOML table."""
    if isinstance(value, str):
        name, *args = value.split(":")
        try:
            if name == "uniform" and len(args) == 2:
                return Uniform(int(args[0]), int(args[1]))
            if name == "zipf" and len(args) in (2, 3):
                return Zipf(float(args[0]), int(args[1]), *(int(a) for a in args[2:]))
        except ValueError:
            pass
        raise ConfigError(f"cannot parse distribution {value!r}")
    if isinstance(value, dict):
        value = dict(value)
        name = value.pop("dist", None)
        try:
            if name == "uniform":
                return Uniform(**value)
            if name == "zipf":
                return Zipf(**value)
        except TypeError as exc:
            raise ConfigError(f"bad {name} parameters: {exc}") from None
    raise ConfigError(f"cannot parse distribution {value!r}")


def _pair(v, what):
    if v is None:
        return None
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigError(f"{what} must be a two-element list")
    return int(v[0]), int(v[1])


def dataset_from(entry: dict, seed: int) -> DatasetSpec:
    name = entry.get("name")
    if not name:
        raise ConfigError("every dataset needs a name")
    scale = int(entry.get("scale", 1))
    if "path" in entry:
        return DatasetSpec(name, path=entry["path"], scale=scale)
    n = int(entry.get("n", 0))
    start = parse_dist(entry.get("start", {"dist": "uniform", "lo": 1, "hi": max(n, 1)}))
    dur = parse_dist(entry.get("duration", {"dist": "zipf", "beta": 1.0, "max": 1000}))
    return DatasetSpec(name, DataSpec(n, start, dur, int(entry.get("seed", seed))), scale=scale)


def workload_from(entry: dict, seed: int) -> WorkloadSpec:
    fractions = entry.get("fractions")
    if fractions is not None:
        fractions = MixFractions(*(Fraction(str(x)).limit_denominator(10**6) for x in fractions))
    return WorkloadSpec(
        name=entry.get("name", entry.get("kind", "workload")),
        kind=entry.get("kind", "range-duration"),
        count=int(entry.get("count", 100)),
        grid=int(entry.get("grid", 32)),
        fractions=fractions,
        range_len=_pair(entry.get("range_len"), "range_len"),
        dur_width=_pair(entry.get("dur_width"), "dur_width"),
        seed=int(entry.get("seed", seed)),
    )


def backend_params(entry: dict) -> list[tuple[str, dict]]:
    """Expand list-valued parameters of a backend entry into their product."""
    entry = dict(entry)
    name = entry.pop("name", None)
    if name is None:
        raise ConfigError("every backend needs a name")
    if name not in BACKENDS:
        raise ConfigError(f"unknown backend {name!r}; expected one of {sorted(BACKENDS)}")
    keys = sorted(entry)
    values = [v if isinstance(v, list) else [v] for v in (entry[k] for k in keys)]
    return [(name, dict(zip(keys, combo))) for combo in itertools.product(*values)]


def load_experiment(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"experiment file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _matrix(exp: dict, args):
    seed = args.seed if getattr(args, "seed", None) is not None else int(exp.get("seed", 0))
    datasets = [dataset_from(d, seed) for d in exp.get("datasets", [])]
    workloads = tuple(workload_from(w, seed) for w in exp.get("workloads", []))
    backends = [p for b in exp.get("backends", []) for p in backend_params(b)]
    if not datasets or not backends:
        raise ConfigError("experiment needs at least one dataset and one backend")
    return seed, datasets, workloads, backends


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    spec = DataSpec(args.n, parse_dist(args.start or f"uniform:1:{max(args.n, 1)}"),
                    parse_dist(args.duration), args.seed)
    r = gen_relation(spec)
    save_relation(r, args.out)
    if len(r):
        d = r.durations
        print(f"n={len(r)} start=[{r.start.min()}, {r.start.max()}] end_max={r.end.max()} "
              f"duration=[{d.min()}, {d.max()}] mean_duration={d.mean():.2f}")
    else:
        print("n=0")
    return EXIT_OK


def cmd_bench(args) -> int:
    exp = load_experiment(args.config)
    seed, datasets, workloads, backends = _matrix(exp, args)
    if not workloads:
        raise ConfigError("bench needs at least one workload")
    repetitions = args.repetitions or int(exp.get("repetitions", 1))
    warmup = int(exp.get("warmup", 1))
    verify = args.verify or bool(exp.get("verify", False))
    out = Path(args.out or exp.get("output", "results.csv"))
    report = RunReport()
    for ds in datasets:
        relation = ds.load()
        queries = {w.name: w.queries(relation) for w in workloads}
        for name, params in backends:
            cfg = RunConfig(name, ds, workloads, params, repetitions, warmup, verify)
            r = run(cfg, relation, queries)
            for s in r.summaries():
                print(f"{s.dataset:>12} {s.backend:>14} {s.params:<28} {s.workload:>16} "
                      f"qps={s.qps:10.1f} build_ms={s.build_ms:9.1f} bytes={s.bytes_per_interval:6.2f}")
            report.extend(r)
    report.rows.extend(best_rows(report.rows))
    write_csv(report, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_update_bench(args) -> int:
    exp = load_experiment(args.config)
    seed, datasets, _, backends = _matrix(exp, args)
    upd = exp.get("update", {})
    out = Path(args.out or upd.get("output", exp.get("output", "updates.csv")))
    rows = []
    for ds in datasets:
        relation = ds.load()
        for name, params in backends:
            if not BACKENDS[name].supports_updates:
                print(f"skipping {name}: static backend", file=sys.stderr)
                continue
            backend, r = run_updates(
                name, relation,
                batch_size=int(upd.get("batch_size", 50_000)),
                insert_order=upd.get("order", "random"),
                seed=seed,
                drain=bool(upd.get("drain", False)),
                check_every=int(upd.get("check_every", 0)),
                dataset=ds.name,
                **params,
            )
            for row in r:
                print(f"{ds.name:>12} {name:>14} {row.params:<24} {row.phase:>7} batch={row.batch:4d} "
                      f"size={row.size_after:9d} ops/s={row.ops_per_sec:12.1f}")
            rows.extend(r)
            if upd.get("drain") and len(backend) != 0:
                raise AssertionError(f"{name} not empty after drain")
    write_update_csv(rows, out)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_query(args) -> int:
    relation = load_relation(args.dataset)
    params = {}
    if args.backend == "rd-index":
        params = {"s": args.s, "order": args.order}
    backend = make_backend(args.backend, relation, **params)
    q = Query.of(tuple(args.range) if args.range else None,
                 tuple(args.duration) if args.duration else None)
    res = backend.query(q)
    print(res.count)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdindex", description="RD-index experiments")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--start", help="uniform:LO:HI or zipf:BETA:MAX[:OFFSET] (default uniform:1:n)")
    g.add_argument("--duration", default="zipf:1:1000")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    for name, func, help_ in (("bench", cmd_bench, "run a query benchmark matrix"),
                              ("update-bench", cmd_update_bench, "run an insertion/removal benchmark")):
        b = sub.add_parser(name, help=help_)
        b.add_argument("config", help="experiment TOML file")
        b.add_argument("--out")
        b.add_argument("--seed", type=int)
        b.add_argument("--repetitions", type=int)
        b.add_argument("--verify", action="store_true", help="check every backend against a linear scan")
        b.set_defaults(func=func)

    q = sub.add_parser("query", help="count the matches of one query on a dataset file")
    q.add_argument("dataset")
    q.add_argument("--range", type=int, nargs=2, metavar=("TS", "TE"))
    q.add_argument("--duration", type=int, nargs=2, metavar=("DMIN", "DMAX"))
    q.add_argument("--backend", default="rd-index")
    q.add_argument("--s", type=int, default=200)
    q.add_argument("--order", default="dt")
    q.set_defaults(func=cmd_query)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ConfigError, DatasetError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
