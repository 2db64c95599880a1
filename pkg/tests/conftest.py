import pytest

ACCEPTANCE_LINES = pytest.StashKey[list]()


def format_line(number: int, title: str, ok: bool, detail: str) -> str:
    return f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"


@pytest.fixture
def acceptance_report(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_LINES, [])

    def record(number, title, ok, detail):
        line = format_line(number, title, ok, detail)
        lines.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
