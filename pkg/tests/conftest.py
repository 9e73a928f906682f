from __future__ import annotations

import pytest

from busevac.fixtures import six_node_network, six_node_scenario
from busevac.simulator import SimConfig


@pytest.fixture(scope="session")
def net():
    return six_node_network()


@pytest.fixture()
def scenario(net):
    return six_node_scenario(net)


@pytest.fixture()
def efficiency():
    return SimConfig(equity_enabled=False)


@pytest.fixture()
def epc_mode():
    return SimConfig(max_steps=100, penalty_mode="epc_waiting")


# one PASS/FAIL line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
