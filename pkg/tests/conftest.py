import numpy as np
import pytest

from lqrhc import lqmodel as lqm


def scalar_recursion(P0, n):
    """Example-1 value iterates ``P_{k+1} = 4 P_k / (1 + P_k)``, kept independent of the library."""
    out = [P0]
    for _ in range(n):
        out.append(4.0 * out[-1] / (1.0 + out[-1]))
    return out


@pytest.fixture
def ex1():
    return lqm.unstable_scalar_problem()


@pytest.fixture
def ex2():
    return lqm.singular_reverse_problem()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance verdicts collected by test_acceptance.py, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abcdefgh")), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
