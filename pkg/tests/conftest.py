import pytest

from bubbletower.config import ProblemParams
from bubbletower.constants import compute_constants, lambda0


@pytest.fixture(scope="session")
def params():
    return ProblemParams()


@pytest.fixture(scope="session")
def consts(params):
    return compute_constants(params)


@pytest.fixture(scope="session")
def lam0(params, consts):
    return lambda0(params, consts)


_LOG_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(_LOG_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LOG_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
