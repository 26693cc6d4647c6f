"""Shared fixtures: acceptance verdicts are collected and echoed at the end."""

import pytest

VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """``verdict(k, passed, detail)`` records one line and asserts ``passed``."""

    def record(k: int, passed: bool, detail: str) -> None:
        line = f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        VERDICTS.append(line)
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
