import cmath
import math

import numpy as np
import pytest

from ammonia_qmd.qdyn import StateVector


def random_state(rng: np.random.Generator) -> StateVector:
    z = rng.normal(size=4)
    a, b = complex(z[0], z[1]), complex(z[2], z[3])
    n = math.sqrt(abs(a) ** 2 + abs(b) ** 2)
    return StateVector(a / n, b / n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def close_state(s1, s2, tol):
    return abs(s1.alpha - s2.alpha) <= tol and abs(s1.beta - s2.beta) <= tol


def unit(phase):
    return cmath.exp(1j * phase)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
