import numpy as np
import pytest

from pathrde.path_core import DiscretePath
from pathrde.rough_lift import brownian_lift, smooth_lift

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def linear_driver(n, p=2.1, T=1.0):
    t = np.linspace(0.0, T, n)
    return smooth_lift(DiscretePath(t, t), p)


@pytest.fixture
def bm256():
    return brownian_lift(11, 256, p=2.1)


@pytest.fixture
def bm2d():
    return brownian_lift(5, 64, d=2, p=2.2)
