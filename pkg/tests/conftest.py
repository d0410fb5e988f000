import pytest

CRITERIA = []


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict; the lines are reprinted in the run summary."""

    def record(number, passed, text):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}"
        print(line)
        CRITERIA.append((number, line))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(line)
