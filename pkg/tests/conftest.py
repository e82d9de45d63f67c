import pytest

_CRITERIA: dict[int, tuple[str, bool, list]] = {}


@pytest.fixture
def criterion():
    """Record the sub-checks of one acceptance criterion; returns the overall verdict."""

    def record(number: int, title: str, checks: list[tuple[str, bool, object]]) -> bool:
        ok = all(passed for _, passed, _ in checks)
        _CRITERIA[number] = (title, ok, checks)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, checks = _CRITERIA[number]
        terminalreporter.write_line(f"AC{number:<2d} {'PASS' if ok else 'FAIL'}  {title}")
        for name, passed, measured in checks:
            terminalreporter.write_line(f"        {'ok  ' if passed else 'FAIL'} {name}: {measured}")
