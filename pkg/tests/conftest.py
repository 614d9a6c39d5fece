import pytest


def pytest_configure(config):
    config._criterion_lines = []


@pytest.fixture
def criterion(request, capsys):
    """Record and print one PASS/FAIL line, then assert it."""

    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        request.config._criterion_lines.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(getattr(config, "_criterion_lines", []))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in lines:
            terminalreporter.write_line(line)
