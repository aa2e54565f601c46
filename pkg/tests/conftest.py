"""Shared pytest plumbing: collects one PASS/FAIL line per acceptance criterion
and prints them together at the end of the run."""

import pytest

_ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Call ``verdict(criterion, passed, detail)`` once per acceptance criterion.

    The line is printed immediately (visible with ``-s``) and repeated in the
    terminal summary; the test is failed when ``passed`` is false.
    """
    def record(criterion: int, passed: bool, detail: str):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'} - {detail}"
        _ACCEPTANCE[criterion] = line
        print(line)
        if not passed:
            pytest.fail(line, pytrace=False)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[key])
