import pytest

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def record_acceptance(number: int, passed: bool, detail: str, seconds: float, budget: float):
    ok = passed and seconds <= budget
    line = (f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}  "
            f"[{seconds:.1f}s of {budget:g}s]")
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def acceptance():
    return record_acceptance
