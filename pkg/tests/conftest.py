import pytest

_RESULTS: dict = {}


@pytest.fixture
def criterion():
    """Record one acceptance line; the caller still asserts."""

    def record(number: int, name: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number:>2} {name:<28} {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _RESULTS[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_RESULTS):
            terminalreporter.write_line(_RESULTS[n])
