import pytest

_VERDICTS = {}


class Verdict:
    """Collects one pass/fail line per acceptance criterion."""

    def __init__(self, number):
        self.number = number

    def __call__(self, ok, detail):
        _VERDICTS[self.number] = (bool(ok), detail)
        return bool(ok)


@pytest.fixture
def verdict(request):
    number = request.node.get_closest_marker("criterion").args[0]
    yield Verdict(number)
    if number not in _VERDICTS:
        _VERDICTS[number] = (False, "did not complete (see traceback)")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
