"""Collects acceptance verdicts and prints them as a block at the end of the run."""

import pytest

VERDICTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict(capsys):
    """Record and immediately print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} -- {detail}"
        VERDICTS[number] = (ok, line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n][1])
