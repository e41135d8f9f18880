import pytest

_LINES = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Record one pass/fail line per acceptance criterion."""

    def record(k: int, ok: bool, detail: str, seconds: float):
        line = f"ACCEPTANCE {k:>2}: {'PASS' if ok else 'FAIL'}  ({seconds:.1f} s)  {detail}"
        _LINES.append((k, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
