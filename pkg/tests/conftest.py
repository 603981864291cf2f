import numpy as np
import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def report_line(request):
    """Record one acceptance line; all lines are repeated in the terminal summary."""
    lines = request.config.stash[_LINES_KEY]

    def add(text):
        print(text)
        lines.append(text)

    return add


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for text in lines:
            terminalreporter.write_line(text)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
