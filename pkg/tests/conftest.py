"""Collects one pass/fail line per acceptance criterion and prints them at the end."""
import pytest

CRITERIA = {}
_SEEN = set()


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records the outcome of criterion n and prints it."""
    n = request.node.get_closest_marker("criterion").args[0]
    _SEEN.add(n)

    def record(ok, detail):
        CRITERIA[n] = (bool(ok), detail)
        print(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


def pytest_terminal_summary(terminalreporter):
    if not _SEEN:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_SEEN):
        ok, detail = CRITERIA.get(n, (False, "did not complete"))
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
