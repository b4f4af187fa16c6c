import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line; the lines are printed in the terminal summary."""

    def record(number, title, ok, detail=""):
        _LINES.append((number, f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
                                + (f" ({detail})" if detail else "")))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES, key=lambda item: item[0]):
        terminalreporter.write_line(line)
