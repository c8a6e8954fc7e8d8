import itertools
from contextlib import contextmanager
from fractions import Fraction

import pytest

from mumab.env import ChannelEnvironment, ChannelModel
from mumab.matching import MeanMatrix

K2M3 = [[0.9, 0.5, 0.2], [0.6, 0.8, 0.3]]
K2M3_MULTI = [[0.9, 0.9, 0.1], [0.2, 0.2, 0.8]]


def brute_force(values):
    """(J1, J2 or None, optimal list) by plain enumeration with Fraction sums."""
    k, m = len(values), len(values[0])
    fr = [[Fraction(repr(float(v))) for v in row] for row in values]
    scores = {}
    for perm in itertools.permutations(range(1, m + 1), k):
        scores[perm] = sum(fr[j][c - 1] for j, c in enumerate(perm))
    j1 = max(scores.values())
    below = [v for v in scores.values() if v < j1]
    opt = sorted(a for a, v in scores.items() if v == j1)
    return j1, (max(below) if below else None), opt


def point_env(values, seed=0):
    return ChannelEnvironment(ChannelModel(MeanMatrix(values)), seed)


@pytest.fixture
def k2m3():
    return MeanMatrix(K2M3)


@pytest.fixture
def k2m3_multi():
    return MeanMatrix(K2M3_MULTI)


# acceptance criteria report: number -> (passed, title, detail)
ACCEPTANCE = {}


@contextmanager
def criterion(number, title):
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        ACCEPTANCE[number] = (False, title, info["detail"])
        raise
    ACCEPTANCE[number] = (True, title, info["detail"])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
