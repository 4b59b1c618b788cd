import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from rdindex import load_relation
from rdindex.bench import read_csv
from rdindex.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

EXPERIMENT = """
seed = 3
repetitions = 1
output = "{out}"

[[datasets]]
name = "syn"
n = {n}

[[backends]]
name = "rd-index"
s = 200
order = "dt"

{extra_backends}

[[workloads]]
name = "rd"
kind = "range-duration"
count = 100

[[workloads]]
name = "r"
kind = "range-only"
count = 100

[[workloads]]
name = "d"
kind = "duration-only"
count = 100

[update]
batch_size = 500
order = "sorted"
drain = true
check_every = 100
"""


def write_experiment(tmp_path, n=2000, backends=("linear-scan",)):
    extra = "\n".join(f'[[backends]]\nname = "{b}"\n' for b in backends)
    p = tmp_path / "exp.toml"
    p.write_text(EXPERIMENT.format(out=tmp_path / "out.csv", n=n, extra_backends=extra))
    return p


def test_generate(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["generate", "--n", "1000", "--seed", "5", "--out", str(a)]) == 0
    assert "n=1000" in capsys.readouterr().out
    assert main(["generate", "--n", "1000", "--seed", "5", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    r = load_relation(a)
    assert len(r) == 1000
    hist = np.bincount(r.durations)
    assert hist[1] > hist[2] > hist[10]


def test_generate_bad_distribution(tmp_path, capsys):
    assert main(["generate", "--n", "10", "--duration", "pareto:1", "--out", str(tmp_path / "x.csv")]) == 1
    assert "pareto" in capsys.readouterr().err


def test_bench_row_accounting(tmp_path):
    exp = write_experiment(tmp_path, n=100_000)
    assert main(["bench", str(exp)]) == 0
    rows = read_csv(tmp_path / "out.csv")
    summaries = [r for r in rows if r["query_id"] == "summary"]
    assert sorted((r["backend"], r["workload"]) for r in summaries) == sorted(
        (b, w) for b in ("rd-index", "linear-scan") for w in ("rd", "r", "d"))
    assert len([r for r in rows if r["query_id"] == "best"]) == 6


def test_bench_verify_all_backends(tmp_path, capsys):
    exp = tmp_path / "exp.toml"
    exp.write_text(f"""
seed = 1
output = "{tmp_path / 'v.csv'}"
[[datasets]]
name = "syn"
n = 10000
[[backends]]
name = "rd-index"
s = [1, 16, 200]
order = ["td", "dt"]
[[backends]]
name = "grid-file"
[[backends]]
name = "interval-tree"
[[backends]]
name = "btree"
[[backends]]
name = "linear-scan"
[[workloads]]
name = "mixed"
kind = "mixed"
count = 300
fractions = ["1/3", "1/3", "1/3"]
""")
    assert main(["bench", str(exp), "--verify"]) == 0


def test_bench_overrides_and_determinism(tmp_path):
    exp = write_experiment(tmp_path)
    out1, out2 = tmp_path / "1.csv", tmp_path / "2.csv"
    assert main(["bench", str(exp), "--out", str(out1), "--seed", "9", "--repetitions", "2"]) == 0
    assert main(["bench", str(exp), "--out", str(out2), "--seed", "9"]) == 0
    cols = ("backend", "params", "dataset", "workload", "query_id", "kind", "k", "examined")
    a = [tuple(r[c] for c in cols) for r in read_csv(out1)]
    b = [tuple(r[c] for c in cols) for r in read_csv(out2)]
    assert a == b
    assert main(["bench", str(exp), "--out", str(out2), "--seed", "10"]) == 0
    assert [tuple(r[c] for c in cols) for r in read_csv(out2)] != a


def test_bench_verification_mismatch_exit_code(tmp_path, monkeypatch, capsys):
    from rdindex.baselines import BTreeBackend

    real = BTreeBackend.query

    def broken(self, q, collect=False):
        res = real(self, q, collect)
        return type(res)(0, res.examined, frozenset())

    monkeypatch.setattr(BTreeBackend, "query", broken)
    exp = write_experiment(tmp_path, backends=("btree",))
    assert main(["bench", str(exp), "--verify"]) == 2
    err = capsys.readouterr().err
    assert "btree" in err and "expected" in err


@pytest.mark.parametrize("body", [
    "this is not toml [",
    "[[datasets]]\nname = 'x'\nn = 10\n",
    "[[datasets]]\nname = 'x'\nn = 10\n[[backends]]\nname = 'r-tree'\n[[workloads]]\nname = 'w'\n",
    "[[datasets]]\nname = 'x'\nn = 10\n[[backends]]\nname = 'rd-index'\ns = 0\n[[workloads]]\nname = 'w'\n",
    "[[datasets]]\nname = 'x'\nn = 10\n[[backends]]\nname = 'btree'\n[[workloads]]\nname = 'w'\nkind = 'all'\n",
])
def test_bench_config_errors(tmp_path, body, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(body)
    assert main(["bench", str(p), "--out", str(tmp_path / "o.csv")]) == 1
    assert capsys.readouterr().err.startswith("error:")
    assert main(["bench", str(tmp_path / "absent.toml")]) == 1


def test_update_bench(tmp_path, capsys):
    exp = write_experiment(tmp_path, n=3000, backends=("btree", "grid-file"))
    out = tmp_path / "u.csv"
    assert main(["update-bench", str(exp), "--out", str(out)]) == 0
    assert "skipping grid-file" in capsys.readouterr().err
    rows = read_csv(out)
    assert {r["backend"] for r in rows} == {"rd-index", "btree"}
    for b in ("rd-index", "btree"):
        assert [r["size_after"] for r in rows if r["backend"] == b and r["phase"] == "remove"][-1] == "0"


def test_query_command(tmp_path, capsys):
    p = tmp_path / "d.csv"
    p.write_text("7,13\n9,11\n19,34\n23,33\n")
    assert main(["query", str(p), "--range", "14", "44", "--duration", "5", "15"]) == 0
    assert capsys.readouterr().out.strip() == "2"
    assert main(["query", str(p), "--duration", "5", "8", "--backend", "interval-tree"]) == 0
    assert capsys.readouterr().out.strip() == "1"
    assert main(["query", str(p)]) == 1
    assert main(["query", str(tmp_path / "missing.csv"), "--range", "1", "2"]) == 1


def test_shipped_configs_parse():
    import argparse

    from rdindex.cli import _matrix, load_experiment

    for path in sorted(CONFIGS.glob("*.toml")):
        _, datasets, _, backends = _matrix(load_experiment(path), argparse.Namespace(seed=None))
        assert datasets and backends, path


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rdindex", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "update-bench" in proc.stdout
