import pytest

VERDICTS: dict[str, str] = {}


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line per acceptance criterion."""

    def record(key: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {key}: {detail}"
        VERDICTS[key] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(VERDICTS, key=lambda k: int(k.split()[1])):
            terminalreporter.write_line(VERDICTS[key])
