import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def report_line(request, capsys):
    """Record and print one pass/fail line for an acceptance criterion."""

    def emit(number, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        if not hasattr(request.config, "acceptance_lines"):
            request.config.acceptance_lines = []
        request.config.acceptance_lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return emit
