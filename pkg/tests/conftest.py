"""Collects acceptance verdicts and prints one line per criterion at the end."""
from contextlib import contextmanager

import pytest

_VERDICTS: list[tuple[str, bool, str]] = []


class _Note:
    detail = ""


@pytest.fixture
def criterion():
    """``with criterion("name") as note:`` records pass or fail for the block."""

    @contextmanager
    def record(name: str):
        note = _Note()
        try:
            yield note
        except BaseException as exc:
            _VERDICTS.append((name, False, note.detail or type(exc).__name__))
            raise
        _VERDICTS.append((name, True, note.detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _VERDICTS:
        line = f"{'PASS' if ok else 'FAIL'}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
