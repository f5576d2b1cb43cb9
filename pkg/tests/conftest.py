import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_VERDICTS = {}


@pytest.fixture
def verdict():
    """Record and print the one-line outcome of an acceptance criterion."""
    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS[n] = line
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
