import numpy as np
import pytest

from daesplit.dae import CoupledDae, Partition


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def scalar_ode(rate=-1.0):
    """y' = rate * y as a one-block model without a Jacobian hook."""
    return CoupledDae(Partition(1, 0), f1=lambda s: rate * s.y)


def semi_explicit_growth():
    """y' = z, 0 = z - y."""
    return CoupledDae(Partition(1, 0, 1, 0), f1=lambda s: s.z[:1], g1=lambda s: s.z[:1] - s.y[:1])


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Collect one verdict line; all lines are shown in the terminal summary."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
