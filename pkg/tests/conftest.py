import numpy as np
import pytest

from hypostrat.params import PhysParams, default_constants


@pytest.fixture
def viscous():
    return PhysParams(0.01, 0.01, 1.0, 0.1)


@pytest.fixture
def inviscid():
    return PhysParams.inviscid(1.0, 0.1)


@pytest.fixture
def consts():
    return default_constants(1.0, 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report_line():
    """Record one PASS/FAIL line for the acceptance summary and return ``ok``."""
    def record(label, ok, detail):
        line = f"{label} {'PASS' if ok else 'FAIL'}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
