import numpy as np
import pytest

from surflin.grid import GridConfig, build_space
from surflin.material import MaterialSpec


@pytest.fixture(scope="session")
def unit_space():
    return build_space(GridConfig(nx=6, ny=6))


@pytest.fixture(scope="session")
def clamped_space():
    return build_space(GridConfig(nx=6, ny=6, dirichlet_edges=("left",)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def material():
    return MaterialSpec()


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per criterion; returns ``ok`` for use in the assert."""

    def record(number, ok, detail, seconds):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail} [{seconds:.2f}s]"
        request.config._acceptance_lines.append(line)
        print(line)
        return ok

    return record
