import pytest

_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one acceptance line; printed in the terminal summary."""

    def _record(number: int, ok: bool, detail: str) -> None:
        _LINES.append(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
