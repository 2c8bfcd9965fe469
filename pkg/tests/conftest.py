import numpy as np
import pytest

from longrisk import fixture2, one_state, principal_eigen

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def fix2():
    m = fixture2()
    return m, principal_eigen(m)


@pytest.fixture(scope="session")
def one():
    m = one_state(0.05)
    return m, principal_eigen(m)


@pytest.fixture
def record():
    """Record an acceptance verdict: record(number, passed, detail)."""

    def _record(number, passed, detail=""):
        ACCEPTANCE[number] = (bool(passed), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def rng(seed):
    return np.random.default_rng(seed)
