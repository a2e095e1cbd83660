import numpy as np
import pytest

from scalarflat import punctured_ball

_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def flagship():
    """The model with ``w = 1/r + 2`` on the punctured unit ball."""
    return punctured_ball(3, 4.0 * np.pi, 1.0)


@pytest.fixture
def criterion():
    """Record one acceptance verdict; the summary prints at session end."""

    def record(number, passed, detail=""):
        _ACCEPTANCE[number] = (bool(passed), detail)
        line = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(
            f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
