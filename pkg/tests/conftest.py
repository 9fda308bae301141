import numpy as np
import pytest

from mulcontrol import ScalarField, make_grid


@pytest.fixture
def grid3():
    return make_grid(1, 3, 1.0)


@pytest.fixture
def grid199():
    return make_grid(1, 199, 1.0)


@pytest.fixture
def sine199(grid199):
    return ScalarField.from_function(grid199, lambda x: np.sin(np.pi * x))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    lines = test_acceptance.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
