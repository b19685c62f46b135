import pytest

_acceptance_lines: list[str] = []


@pytest.fixture
def criterion_report():
    """Collect one pass/fail line per acceptance criterion for the summary."""

    def _report(line: str) -> None:
        _acceptance_lines.append(line)

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.line(line)
