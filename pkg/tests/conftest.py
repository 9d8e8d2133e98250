from __future__ import annotations

import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


class Criterion:
    def __init__(self, number: int, title: str) -> None:
        self.number = number
        self.title = title

    def check(self, ok: bool, detail: str) -> None:
        """Record and print the outcome, then fail the test if ``ok`` is false."""
        line = f"criterion {self.number:2d} {'PASS' if ok else 'FAIL'}: {self.title} ({detail})"
        _RESULTS[self.number] = (bool(ok), line)
        print(line)
        assert ok, line


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    number, title = marker.args
    return Criterion(number, title)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion under test")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[n][1])
