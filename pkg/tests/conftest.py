import os

import pytest
from hypothesis import settings

settings.register_profile("osbm", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("osbm")

# keep thread-count dependent code paths deterministic unless a test asks otherwise
os.environ.setdefault("OSBM_THREADS", "1")

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion; returns the recorder."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number: int, ok: bool, text: str) -> bool:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {text}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
