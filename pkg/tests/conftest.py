import numpy as np
import pytest

from mwlasso import ClusteredDataset


def random_dataset(rng, n1, n2, p, sizes=(1,), empty_ok=True):
    """Dataset with cell sizes drawn from ``sizes``; guarantees at least one observation."""
    cells = {}
    for i in range(n1):
        for j in range(n2):
            n = int(rng.choice(sizes))
            if n:
                cells[(i, j)] = (rng.normal(size=n), rng.normal(size=n), rng.normal(size=(n, p)))
    if not cells:
        cells[(0, 0)] = (rng.normal(size=1), rng.normal(size=1), rng.normal(size=(1, p)))
    return ClusteredDataset(n1, n2, cells, p)


@pytest.fixture
def rng():
    return np.random.default_rng(20190506)


# One line per acceptance criterion, echoed in the terminal summary.
ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
