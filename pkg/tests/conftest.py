import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from odlab import crescent_scene, disk_scene, free_scene, solve  # noqa: E402


@pytest.fixture(scope="session")
def disk():
    return disk_scene()


@pytest.fixture(scope="session")
def crescent():
    return crescent_scene()


@pytest.fixture(scope="session")
def free():
    return free_scene()


@pytest.fixture(scope="session")
def disk_field(disk):
    return solve(disk, 0.01)


@pytest.fixture(scope="session")
def coarse_disk_field(disk):
    return solve(disk, 0.02)


@pytest.fixture(scope="session")
def crescent_field(crescent):
    return solve(crescent, 0.01)


@pytest.fixture(scope="session")
def free_field(free):
    return solve(free, 0.01)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
