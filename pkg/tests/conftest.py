import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[int, tuple[str, bool, str]] = {}


class Criterion:
    """Records one acceptance criterion's outcome for the end-of-run summary."""

    def __init__(self, number: int, title: str):
        self.number, self.title = number, title
        self.detail = ""
        _RESULTS[number] = (title, False, "not finished")

    def check(self, ok: bool, detail: str) -> None:
        self.detail = detail
        _RESULTS[self.number] = (self.title, bool(ok), detail)
        print(f"criterion {self.number} {'PASS' if ok else 'FAIL'}: {self.title} | {detail}")
        assert ok, detail


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:2d}. {title}: {detail}")
