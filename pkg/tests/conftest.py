import numpy as np
import pytest

from tsgs3vm.data import SemiDataset, two_gaussians

ACCEPTANCE_LINES = []


def record(criterion, passed, detail=""):
    ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {criterion}  {detail}")
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_data():
    X, y = two_gaussians(80, d=3, shift=2.0, seed=5)
    return SemiDataset(X[:24], y[:24], X[24:], y[24:])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
