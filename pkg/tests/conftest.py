import numpy as np
import pytest


class CountingProblem:
    """Delegates to a problem and records every evaluated row."""

    def __init__(self, problem):
        self.inner = problem
        self.calls = 0
        self.points = []

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        rows = X if X.ndim == 2 else X[None, :]
        self.calls += len(rows)
        self.points.append(rows.copy())
        return self.inner(X)

    def evaluated(self):
        return np.vstack(self.points) if self.points else np.zeros((0, self.inner.dimension))


@pytest.fixture
def counting():
    return CountingProblem


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record and print one pass/fail line per acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
