import pytest

CRITERIA = []  # (number, passed, detail), filled by test_acceptance


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail in sorted(CRITERIA, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}")


@pytest.fixture(scope="session")
def criteria_log():
    return CRITERIA
