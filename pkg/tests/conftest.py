import numpy as np
import pytest

from rdindex import Relation

# Days counted from June 1: amoxicillin, paracetamol, ceftriaxone, ibuprofen.
RUNNING = [(7, 13), (9, 11), (19, 34), (23, 33)]
R1, R2, R3, R4 = 1, 2, 3, 4

FIG4_STARTS = [1, 2, 4, 4, 7, 8, 10] + [13] * 11 + [14, 15, 16, 17, 19, 21, 23]


@pytest.fixture
def running():
    return Relation.from_pairs(RUNNING, ids=[R1, R2, R3, R4])


@pytest.fixture
def fig4():
    return Relation.from_pairs([(s, s + 1 + (i % 5)) for i, s in enumerate(FIG4_STARTS)])


def random_relation(rng: np.random.Generator, n: int, max_start: int = 1000, max_dur: int = 50) -> Relation:
    st = rng.integers(1, max_start, size=n, endpoint=True)
    du = rng.integers(1, max_dur, size=n, endpoint=True)
    return Relation(st, st + du)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.result_lines():
        terminalreporter.write_line(line)
