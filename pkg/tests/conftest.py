import numpy as np
import pytest

from rollwave import profile as prof_mod
from rollwave.equilibria import tau0_for_period
from rollwave.model import ModelParams

F, NU = 6.0, 0.1
X_HOPF = 2.0 * np.pi
OFFSET = 1e-3  # relative distance below c_s of the reference wave

_ACCEPTANCE = {}


def record(criterion, passed, detail):
    """Store the outcome of an acceptance criterion for the terminal summary."""
    _ACCEPTANCE[criterion] = (bool(passed), detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def params():
    return ModelParams(F, NU)


@pytest.fixture(scope="session")
def branch(params):
    """``(c_s, k)`` with ``c - c_s ~ k a^2`` on the branch at ``X = 2 pi``."""
    return prof_mod.hopf_branch_slope(params, X_HOPF)


@pytest.fixture(scope="session")
def near_hopf(params, branch):
    """Small-amplitude wave at ``c = c_s (1 - 1e-3)``, sampled on 512 points."""
    c_s, _ = branch
    c = c_s * (1.0 - OFFSET)
    return prof_mod.solve_profile(params, X_HOPF, c, prof_mod.hopf_seed(params, X_HOPF, c), L=512)


@pytest.fixture(scope="session")
def tau0(params):
    return tau0_for_period(params, X_HOPF)
