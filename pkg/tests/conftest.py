import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def no_ties_matrix(rng, n, d):
    """Random matrix whose columns have pairwise-distinct values."""
    while True:
        m = rng.standard_normal((n, d))
        if all(np.unique(m[:, j]).size == n for j in range(d)):
            return m


# (criterion number, passed, detail) rows collected by test_acceptance.py
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
