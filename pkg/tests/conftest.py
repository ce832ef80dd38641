import sys

import numpy as np
import pytest

from snls.torus import TorusGrid


@pytest.fixture
def grid():
    return TorusGrid(32)


@pytest.fixture
def small_grid():
    return TorusGrid(8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
