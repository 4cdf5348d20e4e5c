"""Shared simulation runs, computed once per session."""

from functools import lru_cache

import pytest

from kpp_accel.nonlinearity import make_logistic
from kpp_accel.profiles import TargetCurve, from_target_curve, make_profile
from kpp_accel.solver import GridSpec, SolverConfig, run
from kpp_accel.theory import flatness_observer

LEVELS = (0.25, 0.5, 0.75)
UNIFORM_WIDE = GridSpec(kind="uniform", x_left=-20.0, x_right=300.0, h0=0.05)


@lru_cache(maxsize=None)
def simulate(family, alpha, t_end, obs_dt=0.5, levels=LEVELS, snapshots=False, margin=0.2, beta=None, grid=None):
    nl = make_logistic(1.0)
    if family == "target_quadratic":
        p = from_target_curve(TargetCurve("quadratic"), 1.0)
    else:
        params = {"alpha": alpha} if beta is None else {"alpha": alpha, "beta": beta}
        p = make_profile(family, params)
    cfg = SolverConfig(obs_dt=obs_dt, expansion_margin=margin)
    rec = run(p, nl, cfg, t_end, observers=(flatness_observer,), levels=levels, grid=grid,
              keep_snapshots=snapshots)
    return p, nl, rec


@pytest.fixture(scope="session")
def logistic():
    return make_logistic(1.0)


@pytest.fixture(scope="session")
def algebraic_run():
    return simulate("algebraic", 2.0, 25.0, snapshots=True)


@pytest.fixture(scope="session")
def exponential_slow_run():
    return simulate("exponential", 0.5, 40.0, levels=(0.5,), grid=UNIFORM_WIDE)


@pytest.fixture(scope="session")
def exponential_fast_run():
    return simulate("exponential", 2.0, 50.0, levels=(0.5,), grid=UNIFORM_WIDE)


@pytest.fixture(scope="session")
def stretched_run():
    return simulate("stretched_exp", 0.5, 60.0, beta=1.0)


@pytest.fixture(scope="session")
def tlnt_run():
    return simulate("tlnt", 1.0, 200.0)


@pytest.fixture(scope="session")
def log_power_short_run():
    return simulate("log_power", 1.0, 3.5, obs_dt=0.1, levels=(0.25, 0.5))


@pytest.fixture(scope="session")
def log_power_slow_run():
    return simulate("log_power", 4.0, 12.0)


@pytest.fixture(scope="session")
def target_run():
    return simulate("target_quadratic", None, 60.0, levels=(0.5,))


ACCEPTANCE_LINES = {}


def record_criterion(n, passed, detail):
    """Print and keep one verdict line; the terminal summary repeats them in order."""
    line = f"criterion {n}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
