import pytest

_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record the verdict of an acceptance criterion: ``criterion(number, passed, detail)``."""
    results = request.config.stash.setdefault(_CRITERIA, {})

    def record(number: int, passed: bool, detail: str):
        results[number] = (bool(passed), detail)

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        passed, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
