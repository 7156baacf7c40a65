import pytest

from ergcbf.cli import resolve_scenario

# filled by test_acceptance.report(); printed after the run
ACCEPTANCE = []


@pytest.fixture(scope="session")
def di_scenario():
    return resolve_scenario("double_integrator")


@pytest.fixture(scope="session")
def quad_scenario():
    return resolve_scenario("quadrotor")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
