import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpp_accel import grid as G
from kpp_accel.levelsets import (LevelSetTrajectory, average_speed, crossings, extract_crossings,
                                 fit_growth_law, predicted_growth, transition_width)
from kpp_accel.solver import CauchyState

from conftest import simulate

TIMES = np.linspace(1.5, 30.0, 58)


def test_linear_interpolation_crossing():
    assert crossings(np.array([0.0, 1.0, 2.0]), np.array([0.9, 0.9, 0.1]), 0.5) == (1.5, 1.5)


def test_no_crossing():
    assert crossings(np.array([0.0, 1.0, 2.0]), np.array([0.9, 0.8, 0.7]), 0.5) is None


def test_exact_tie_returns_node():
    assert crossings(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.9, 0.5, 0.4, 0.1]), 0.5) == (1.0, 1.0)


def test_extreme_crossings_of_nonmonotone_data():
    x = np.arange(5.0)
    u = np.array([0.9, 0.1, 0.9, 0.1, 0.1])
    assert crossings(x, u, 0.5) == (0.5, 2.5)


def test_bad_level_rejected():
    with pytest.raises(ValueError):
        crossings(np.arange(3.0), np.zeros(3), 1.0)


def test_extract_from_state():
    g = G.build("uniform", 0.0, 32.0, 32)
    u = np.clip(1.0 - g.nodes / 20.0, 0.0, 1.0)
    st_ = CauchyState(t=0.0, grid=g, u=u, right_farfield=0.0)
    assert extract_crossings(st_, 0.5) == pytest.approx((10.0, 10.0))


def test_average_speed_examples():
    tr = LevelSetTrajectory.from_function(0.5, [1.0, 2.0], lambda t: 2.5 * t)
    assert average_speed(tr, 1.0, 2.0) == 2.5
    tr = LevelSetTrajectory.from_function(0.5, [1.0, 2.0], math.exp)
    assert average_speed(tr, 1.0, 2.0) == pytest.approx(math.e**2 - math.e, rel=1e-14)
    with pytest.raises(ValueError):
        average_speed(tr, 1.0, 1.0)


def test_average_speed_rejects_empty_samples():
    tr = LevelSetTrajectory(0.5)
    tr.append(0.0, None)
    tr.append(1.0, (1.0, 1.0))
    with pytest.raises(ValueError):
        average_speed(tr, 0.0, 1.0)


@pytest.mark.parametrize("law,x_of_t,key,value", [
    ("exponential", lambda t: math.exp(0.5 * t), "rate", 0.5),
    ("power", lambda t: t**2, "exponent", 2.0),
    ("t_log_t", lambda t: 0.5 * t * math.log(t), "slope", 0.5),
    ("linear", lambda t: 2.5 * t + 1.0, "speed", 2.5),
    ("double_exponential", lambda t: math.exp(math.exp(0.1 * t)), "rate", 0.1),
])
def test_exact_laws_recovered(law, x_of_t, key, value):
    times = TIMES + (2.0 if law in ("t_log_t",) else 0.0)
    tr = LevelSetTrajectory.from_function(0.5, times, x_of_t)
    fit = fit_growth_law(tr, law, (times[0], times[-1]))
    assert fit.params[key] == pytest.approx(value, abs=1e-6)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_power_prefactor():
    tr = LevelSetTrajectory.from_function(0.5, TIMES, lambda t: 3.0 * t**1.5)
    assert fit_growth_law(tr, "power", (1, 30)).params["prefactor"] == pytest.approx(3.0, rel=1e-10)


def test_fit_preconditions():
    tr = LevelSetTrajectory.from_function(0.5, np.linspace(1, 2, 5), lambda t: t)
    with pytest.raises(ValueError):
        fit_growth_law(tr, "linear", (1, 2))
    tr = LevelSetTrajectory.from_function(0.5, TIMES, lambda t: t - 5.0)
    with pytest.raises(ValueError):
        fit_growth_law(tr, "exponential", (1, 30))
    tr = LevelSetTrajectory.from_function(0.5, TIMES, lambda t: 2.0)
    with pytest.raises(ValueError):
        fit_growth_law(tr, "double_exponential", (1, 30))
    with pytest.raises(ValueError):
        fit_growth_law(tr, "cubic", (1, 30))


def test_rows_round_trip():
    tr = LevelSetTrajectory(0.25)
    tr.append(0.0, None)
    tr.append(0.5, (1.0, 2.0))
    back = LevelSetTrajectory.from_rows(0.25, list(tr.rows()))
    assert back.t == tr.t and back.empty == tr.empty
    assert back.t_first_nonempty == 0.5


def test_predictions():
    assert predicted_growth("algebraic", {"alpha": 2.0}, 1.0) == {"law": "exponential", "rate": 0.5}
    sp = predicted_growth("stretched_exp", {"alpha": 0.5, "beta": 1.0}, 1.0)
    assert sp["exponent"] == 2.0 and sp["prefactor"] == 1.0
    assert predicted_growth("exponential", {"alpha": 0.5}, 1.0)["speed"] == 2.5
    assert predicted_growth("exponential", {"alpha": 2.0}, 1.0)["speed"] == 2.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=3, max_size=50), st.floats(0.01, 0.99))
def test_crossings_ordered_and_inside(us, lam):
    x = np.arange(len(us), dtype=float)
    c = crossings(x, np.array(us), lam)
    if c is not None:
        assert x[0] <= c[0] <= c[1] <= x[-1]


def test_monotone_run_level_sets():
    _, _, rec = simulate("algebraic", 2.0, 25.0, snapshots=True)
    tr = {lam: rec.trajectories[lam] for lam in (0.25, 0.5, 0.75)}
    for lam, traj in tr.items():
        t, xmin, xmax, empty = traj.arrays()
        assert np.array_equal(xmin[~empty], xmax[~empty])  # singletons
    # nesting: lower levels sit further right
    for a, b in ((0.25, 0.5), (0.5, 0.75)):
        assert np.all(np.array(tr[a].x_min) >= np.array(tr[b].x_min))


def test_speed_increases_for_slow_decay():
    _, _, rec = simulate("algebraic", 2.0, 25.0, snapshots=True)
    tr = rec.trajectories[0.5]
    speeds = [average_speed(tr, t, t + 1.0) for t in range(5, 24)]
    assert np.all(np.diff(speeds) > 0)


def test_width_grows_for_accelerating_front():
    _, _, rec = simulate("algebraic", 2.0, 25.0, snapshots=True)
    t, w = transition_width(rec.trajectories[0.75], rec.trajectories[0.25])
    late = t >= 5
    assert np.all(np.diff(w[late]) > 0)
    assert w[-1] > 10 * w[late][0]


def test_exponential_baseline_speed_converges(exponential_slow_run):
    _, _, rec = exponential_slow_run
    tr = rec.trajectories[0.5]
    errs = [abs(average_speed(tr, t, t + 10.0) - 2.5) for t in (10.0, 20.0, 30.0)]
    assert errs[-1] < errs[0]
    assert errs[-1] < 0.05
