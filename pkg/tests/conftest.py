import numpy as np
import pytest

from lmpower.simulator import Scenario, WageDistribution

ACCEPTANCE_LINES = []


def report(number, passed, detail):
    """Record one acceptance line; also echoed in the terminal summary."""
    line = f"CRITERION {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


def make_scenario(k=2.4, delta=0.07, n=12000, seed=0, **kw):
    return Scenario(lambda_=k * delta, delta=delta, offered_wage=WageDistribution(),
                    n_workers=n, seed=seed, **kw)


@pytest.fixture
def scenario():
    return make_scenario(n=3000, seed=123)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
