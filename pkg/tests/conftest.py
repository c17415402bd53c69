import numpy as np
import pytest

from superliouville.dirac import build_basis, killing_spinor
from superliouville.geometry import build_grid
from superliouville.harmonics import ScalarField


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        print(line)
        request.config._acceptance_lines.append(line)
        assert ok, line

    return record


@pytest.fixture(scope="session")
def grid():
    return build_grid(16)


@pytest.fixture(scope="session")
def basis(grid):
    return build_basis(grid, 4)


@pytest.fixture(scope="session")
def psi0(basis):
    return killing_spinor(basis)


@pytest.fixture(scope="session")
def one(grid):
    return ScalarField.constant(grid, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
