import pytest

from cgyroperf.calib import fit_all, load_records, load_scenarios
from cgyroperf.decomp import load_problem

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def records():
    return load_records("table1")


@pytest.fixture(scope="session")
def nl03():
    return load_problem("nl03")


@pytest.fixture(scope="session")
def scenarios():
    return load_scenarios()


@pytest.fixture(scope="session")
def table1_calib(records, nl03, scenarios):
    return fit_all(records, nl03, scenarios)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
