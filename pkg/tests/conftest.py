import pytest

# (criterion number, passed, detail) appended by the acceptance suite
CRITERIA = []


@pytest.fixture
def criterion():
    """Record a criterion verdict, print it, then assert it."""

    def report(number, passed, detail):
        CRITERIA.append((number, bool(passed), detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}")
        assert passed, f"criterion {number}: {detail}"

    return report


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(CRITERIA, key=lambda c: c[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'} | {detail}")
