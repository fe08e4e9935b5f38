import os

import pytest
from hypothesis import settings

from twostage.cli import default_config
from twostage.config import load_config

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def shipped_cfg():
    return load_config(default_config())


@pytest.fixture(scope="session")
def da_runs(shipped_cfg):
    """Day-ahead solves of the shipped day, keyed by sigma; filled lazily."""
    return {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
