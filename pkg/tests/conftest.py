import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the long training experiments behind the acceptance criteria (or RLTICKET_RUNSLOW=1)")


ACCEPTANCE_LINES = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        assert passed, line
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
