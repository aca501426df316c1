import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """``criterion(n, title, ok, detail)`` records a PASS/FAIL line, then asserts."""
    def record(n, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {n}: {title}" + (f" [{detail}]" if detail else "")
        request.config.acceptance_lines.append(line)
        assert ok, line
    return record
