import numpy as np
import pytest

from nashseek import digraph as dg
from nashseek import game as gm

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def pair_undirected():
    return dg.complete(2)


@pytest.fixture
def pair_unbalanced():
    # a_12 = 2, a_21 = 1
    return dg.DiGraph([[0.0, 2.0], [1.0, 0.0]])


@pytest.fixture
def ring3():
    return dg.ring(3)


@pytest.fixture
def g2():
    return gm.g2()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
