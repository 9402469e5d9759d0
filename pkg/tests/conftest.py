import numpy as np
import pytest

from nvpd import EmissionModel, TwoStateRates

# Fig. 1b telegraph trace: 593 nm, 1 uW
FIG1B_RATES = TwoStateRates.from_lifetimes(56.6, 465.0)
FIG1B_EMISSION = EmissionModel(2.2, 0.3, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20121016)


@pytest.fixture
def fig1b():
    return FIG1B_RATES, FIG1B_EMISSION


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """``check(criterion, ok, detail)`` records a PASS/FAIL line and asserts."""
    lines = request.config.acceptance_lines

    def check(criterion, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
