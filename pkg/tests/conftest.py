import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gmirror.linalg import RegressionProblem, standardize

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_acceptance():
    def record(number: int, passed: bool, detail: str):
        line = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def gaussian_problem(n, p, seed, signals=(), amplitude=3.0, noise=1.0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[list(signals)] = amplitude
    y = X @ beta + noise * rng.standard_normal(n)
    return standardize(RegressionProblem(X, y)), beta


@pytest.fixture
def make_problem():
    return gaussian_problem
