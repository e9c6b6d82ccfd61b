import pytest

# acceptance verdicts, filled by test_acceptance.py and echoed after the run
VERDICTS = []


@pytest.fixture
def verdict():
    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
