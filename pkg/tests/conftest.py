from __future__ import annotations

import pytest

_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one summary line per acceptance criterion."""

    def _report(number: int, title: str, ok: bool, detail: str) -> bool:
        _LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2} {title}: {detail}")
        print(_LINES[-1])
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
