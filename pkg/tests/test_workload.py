from fractions import Fraction

import numpy as np
import pytest

from rdindex import (
    BTreeBackend, ConfigError, DataSpec, DatasetError, Domain, MixFractions, Query, QuerySpec, Relation,
    Uniform, Zipf, gen_mixed, gen_queries, gen_relation, linear_scan, load_relation, save_relation,
    scale_dataset, selectivity_grid_queries,
)
from rdindex.core import DURATION_ONLY, QUERY_KINDS, RANGE_DURATION, RANGE_ONLY

THIRD = Fraction(1, 3)


def test_gen_relation_empty_and_deterministic():
    assert len(gen_relation(DataSpec.synthetic(0))) == 0
    a = gen_relation(DataSpec.synthetic(5000, seed=9))
    b = gen_relation(DataSpec.synthetic(5000, seed=9))
    assert a == b
    assert a.start.tobytes() == b.start.tobytes() and a.end.tobytes() == b.end.tobytes()
    assert gen_relation(DataSpec.synthetic(5000, seed=10)) != a
    assert a.start.min() >= 1 and a.start.max() <= 5000


def test_zipf_ratio_and_pmf():
    r = gen_relation(DataSpec.synthetic(10**6, seed=1))
    d = r.durations
    ratio = np.count_nonzero(d == 1) / np.count_nonzero(d == 2)
    assert abs(ratio - 2) <= 0.1
    assert d.min() >= 1 and d.max() <= 1000
    # chi-square style check of the head of the distribution against the pmf
    pmf = Zipf(1.0, 1000).pmf()
    counts = np.bincount(d, minlength=1001)[1:]
    expected = pmf * len(d)
    head = slice(0, 20)
    rel = np.abs(counts[head] - expected[head]) / expected[head]
    assert rel.max() < 0.05


def test_distribution_validation():
    with pytest.raises(ConfigError):
        Uniform(5, 3)
    with pytest.raises(ConfigError):
        Zipf(1.0, 0)
    with pytest.raises(ConfigError):
        DataSpec(-1, Uniform(1, 2), Uniform(1, 2))
    with pytest.raises(ConfigError):
        DataSpec(10, Uniform(1, 2), Uniform(0, 2))


def test_skewed_starts():
    r = gen_relation(DataSpec.skewed_starts(10_000, seed=3))
    assert np.count_nonzero(r.start == 1) > np.count_nonzero(r.start == 2) > np.count_nonzero(r.start == 50)


@pytest.mark.parametrize("kind", QUERY_KINDS)
def test_gen_queries_kinds(kind):
    r = gen_relation(DataSpec.synthetic(1000, seed=1))
    qs = gen_queries(QuerySpec(200, kind, seed=4), Domain.of(r))
    assert len(qs) == 200 and all(q.kind == kind for q in qs)
    assert qs == gen_queries(QuerySpec(200, kind, seed=4), Domain.of(r))


def test_gen_queries_selectivity_span():
    r = gen_relation(DataSpec.synthetic(10**5, seed=1))
    qs = gen_queries(QuerySpec(2000, RANGE_DURATION, seed=2), Domain.of(r))
    sel = np.array([linear_scan(r, q, collect=False).count for q in qs]) / len(r)
    nz = sel[sel > 0]
    assert np.log10(nz.max() / nz.min()) >= 3


def test_gen_queries_validation():
    with pytest.raises(ConfigError):
        QuerySpec(10, "everything")
    with pytest.raises(ConfigError):
        QuerySpec(10, range_len=(5, 2))


def test_mix_fractions():
    assert MixFractions(THIRD, THIRD, THIRD).split(300) == {RANGE_DURATION: 100, RANGE_ONLY: 100, DURATION_ONLY: 100}
    assert sum(MixFractions(THIRD, THIRD, THIRD).split(100).values()) == 100
    assert MixFractions(1, 0, 0).split(7) == {RANGE_DURATION: 7, RANGE_ONLY: 0, DURATION_ONLY: 0}
    with pytest.raises(ConfigError):
        MixFractions(Fraction(1, 2), Fraction(1, 2), Fraction(1, 2))
    with pytest.raises(ConfigError):
        MixFractions(Fraction(3, 2), Fraction(-1, 2), 0)


def test_gen_mixed_counts():
    r = gen_relation(DataSpec.synthetic(1000, seed=1))
    qs = gen_mixed(QuerySpec(300, seed=5), MixFractions(THIRD, THIRD, THIRD), Domain.of(r))
    kinds = [q.kind for q in qs]
    assert {k: kinds.count(k) for k in QUERY_KINDS} == {k: 100 for k in QUERY_KINDS}


def _measured(r, gq):
    q = gq.query
    t = linear_scan(r, Query(q.range, None), collect=False).count / len(r)
    d = linear_scan(r, Query(None, q.duration), collect=False).count / len(r)
    return t, d


def test_selectivity_grid_g1():
    r = gen_relation(DataSpec.synthetic(10_000, seed=2))
    (gq,) = selectivity_grid_queries(r, 1)
    t, d = _measured(r, gq)
    assert t >= 0.9 and d >= 0.9 and gq.realizable


@pytest.mark.parametrize("spec", [DataSpec.synthetic(20_000, seed=3), DataSpec.skewed_starts(20_000, seed=3)])
def test_selectivity_grid_accuracy_and_monotonicity(spec):
    r = gen_relation(spec)
    g = 8
    grid = selectivity_grid_queries(r, g, seed=1)
    assert len(grid) == g * g
    measured = {}
    for gq in grid:
        t, d = _measured(r, gq)
        assert t == pytest.approx(gq.time_selectivity)
        assert d == pytest.approx(gq.duration_selectivity)
        if gq.realizable:
            assert abs(t - gq.target_time) <= 0.1 * gq.target_time
            assert abs(d - gq.target_duration) <= 0.1 * gq.target_duration
        measured[gq.row, gq.col] = (t, d)
    assert sum(gq.realizable for gq in grid) == g * g
    for b in range(1, g + 1):
        for a in range(1, g):
            assert measured[b, a + 1][0] >= measured[b, a][0]
            assert measured[a + 1, b][1] >= measured[a, b][1]


def test_selectivity_grid_flags_unrealizable():
    # every interval has the same duration: no duration target below 1 is reachable
    r = Relation.from_pairs([(s, s + 5) for s in range(100)])
    grid = selectivity_grid_queries(r, 4)
    assert len(grid) == 16
    assert any(not gq.realizable for gq in grid)


def test_selectivity_grid_errors():
    with pytest.raises(ConfigError):
        selectivity_grid_queries(Relation.empty(), 4)
    with pytest.raises(ConfigError):
        selectivity_grid_queries(Relation.from_pairs([(1, 2)]), 0)


def test_scale_dataset():
    r = Relation.from_pairs([(0, 10)])
    s = scale_dataset(r, 2)
    assert list(zip(s.start.tolist(), s.end.tolist())) == [(0, 10), (10, 20)]
    base = gen_relation(DataSpec.synthetic(2000, seed=4))
    one = scale_dataset(base, 1)
    assert np.array_equal(one.start, base.start) and np.array_equal(one.end, base.end)
    for eta in (2, 5):
        big = scale_dataset(base, eta)
        assert len(big) == eta * len(base)
        assert np.array_equal(np.bincount(big.durations), eta * np.bincount(base.durations))
        assert len(set(big.ident.tolist())) == len(big)
    with pytest.raises(ConfigError):
        scale_dataset(base, 0)
    with pytest.raises(ConfigError):
        scale_dataset(Relation.empty(), 2)
    with pytest.raises(OverflowError):
        scale_dataset(Relation.from_pairs([(0, 2**62)]), 3)


def test_scaling_grows_btree_buckets():
    base = gen_relation(DataSpec.synthetic(5000, seed=5))
    sizes = BTreeBackend.build(base).bucket_sizes()
    for eta in (2, 5):
        scaled = BTreeBackend.build(scale_dataset(base, eta)).bucket_sizes()
        assert scaled == {k: eta * v for k, v in sizes.items()}


def test_load_relation(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("7,13\n9,11\n")
    r = load_relation(p)
    assert len(r) == 2 and r.start.tolist() == [7, 9]
    p.write_text("start,end\n7,13\n")
    assert len(load_relation(p)) == 1
    p.write_text("7,13\n13,7\n")
    with pytest.raises(DatasetError, match=r"a\.csv:2"):
        load_relation(p)
    p.write_text("")
    with pytest.raises(DatasetError):
        load_relation(p)
    p.write_text("1,x\n")
    with pytest.raises(DatasetError, match=":1"):
        load_relation(p)
    p.write_text("1,2,5\n3,4,5\n")
    with pytest.raises(DatasetError):
        load_relation(p)
    with pytest.raises(FileNotFoundError):
        load_relation(tmp_path / "missing.csv")


def test_save_load_round_trip(tmp_path):
    r = gen_relation(DataSpec.synthetic(3000, seed=6))
    save_relation(r, tmp_path / "r.csv")
    assert load_relation(tmp_path / "r.csv") == r
    save_relation(r, tmp_path / "r2.csv", with_ids=False)
    back = load_relation(tmp_path / "r2.csv")
    assert np.array_equal(back.start, r.start) and np.array_equal(back.end, r.end)
