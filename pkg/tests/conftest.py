import numpy as np
import pytest

from asgsfem import build_layout, build_structured_mesh, make_case, partition_interface

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def stokes_case():
    return make_case("stokes")


@pytest.fixture
def small_layout():
    return build_layout(build_structured_mesh(4, 4))


@pytest.fixture
def interface_layout():
    return build_layout(partition_interface(build_structured_mesh(6, 6)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
