import pytest

_RESULTS: dict = {}


@pytest.fixture
def criterion():
    """Record one measured sub-result of an acceptance criterion."""

    def record(number: int, passed: bool, detail: str):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        print(line)
        _RESULTS.setdefault(number, []).append((bool(passed), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        parts = _RESULTS[number]
        ok = all(p for p, _ in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: " + "; ".join(d for _, d in parts))
