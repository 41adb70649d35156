import re

import numpy as np
import pytest

from popctrl.core import BirthRate, ControlWindows, Grid, RateTable, SinBump, Survival
from popctrl.harness import build_scenario, load_config

A = 1.0


def make_rates(K_m=0.3, K_f=0.2, mu0=0.2, c=1.0, beta_h=1.5, lam_h=1.0, gamma=0.45, sat=1.0, kind="rational", A=A):
    beta = BirthRate(SinBump(0.5 * A, 0.95 * A, beta_h), sat, kind)
    return RateTable(A, gamma, K_m, K_f, Survival(A, mu0, c), Survival(A, 0.5 * mu0, 1.5 * c), beta,
                     SinBump(0.05 * A, 0.95 * A, lam_h), beta.lipschitz)


def desk_windows(variant="both-sexes", rho=0.0):
    age_m = (0.0, 0.8) if variant == "male-only" else (0.2, 0.8)
    return ControlWindows((0.2, 0.8), (0.2, 0.8), age_m, (0.1, 0.9), variant, rho)


def bump_field(grid, lo, hi, mode=1, amp=1.0):
    return amp * np.outer(np.sin(mode * np.pi * grid.x), SinBump(lo, hi)(grid.ages))


@pytest.fixture
def rates():
    return make_rates()


@pytest.fixture
def small_grid():
    return Grid(8, 8, 1.0, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk():
    return build_scenario(load_config("thm11-desk"))


# ---------------------------------------------------------------------------
# one line per acceptance criterion at the end of the run
# ---------------------------------------------------------------------------

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _CRITERIA.get(key, ("passed", m.group(2)))
        outcome = "failed" if "failed" in (prev[0], report.outcome) else report.outcome
        _CRITERIA[key] = (outcome, m.group(2))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        outcome, name = _CRITERIA[key]
        mark = "PASS" if outcome == "passed" else "FAIL" if outcome == "failed" else outcome.upper()
        terminalreporter.write_line(f"criterion {key:2d}: {mark}  {name.replace('_', ' ')}")
