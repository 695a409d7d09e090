import pytest

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Record one acceptance criterion's outcome for the end-of-run summary."""
    def _record(number: int, ok: bool, message: str) -> None:
        ACCEPTANCE[number] = (bool(ok), message)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {message}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {msg}")
