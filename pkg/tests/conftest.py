import pytest

_ACCEPTANCE = {}


@pytest.fixture
def report():
    """Record a criterion verdict; all verdicts are printed at the end of the run."""
    def _report(number, ok, detail=""):
        _ACCEPTANCE[number] = (bool(ok), detail)
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
