import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpp_accel.profiles import (TargetCurve, evaluate, from_config, from_target_curve, invert_tail,
                                log_evaluate, make_profile, second_derivative_power_bound, tail_beta,
                                verify_slow_decay)

FAMILIES = [
    ("exponential", {"alpha": 0.5}),
    ("tlnt", {"alpha": 1.0}),
    ("stretched_exp", {"alpha": 0.5, "beta": 1.0}),
    ("algebraic", {"alpha": 2.0}),
    ("log_power", {"alpha": 1.0}),
    ("log_power", {"alpha": 4.0}),
]


def _profiles():
    out = [make_profile(f, p) for f, p in FAMILIES]
    out.append(from_target_curve(TargetCurve("quadratic"), 1.0))
    out.append(from_target_curve(TargetCurve("exponential"), 1.0))
    return out


PROFILES = _profiles()


def test_algebraic_tail_exact():
    p = make_profile("algebraic", {"alpha": 2.0, "C": 1.0}, plateau=0.9, x_blend=10.0)
    assert evaluate(p, 100.0) == pytest.approx(1e-4, rel=1e-14)
    assert evaluate(p, 100.0, 2) == pytest.approx(6e-8, rel=1e-12)


def test_exponential_tail_exact():
    p = make_profile("exponential", {"alpha": 0.5, "C": 1.0}, x_blend=5.0)
    assert evaluate(p, 9.0) == pytest.approx(math.exp(-4.5), rel=1e-14)
    assert evaluate(p, 9.0) == pytest.approx(0.011109, abs=1e-6)


def test_tlnt_tail_formula():
    p = make_profile("tlnt", {"alpha": 1.0, "C": 1.0}, x_blend=10.0)
    for x in (10.0, 30.0, 1e3):
        assert evaluate(p, x) == pytest.approx(math.exp(-x / math.log(x)), rel=1e-13)
    # the analytic tail itself at e^2
    assert p.tail.value(math.e**2) == pytest.approx(math.exp(-math.e**2 / 2.0), rel=1e-13)


def test_plateau_is_flat():
    p = make_profile("algebraic", {"alpha": 2.0})
    x = p.x_left_joint - 5.0
    assert evaluate(p, x) == p.plateau
    assert evaluate(p, x, 1) == 0.0
    assert evaluate(p, x, 2) == 0.0


@pytest.mark.parametrize("p", PROFILES, ids=lambda p: f"{p.family}-{p.params.get('alpha', p.params.get('curve'))}")
def test_joints_are_c2(p):
    for xj in (p.x_left_joint, p.x_blend):
        h = 1e-12 * max(1.0, abs(xj))
        for order in (0, 1):
            assert abs(evaluate(p, xj - h, order) - evaluate(p, xj + h, order)) < 1e-10
        assert abs(evaluate(p, xj - h, 2) - evaluate(p, xj + h, 2)) < 1e-6

        # one-sided second differences from each side close up as the step shrinks
        def gap(k):
            left = evaluate(p, xj - k * np.arange(4))
            right = evaluate(p, xj + k * np.arange(4))
            d_left = (2 * left[0] - 5 * left[1] + 4 * left[2] - left[3]) / k**2
            d_right = (2 * right[0] - 5 * right[1] + 4 * right[2] - right[3]) / k**2
            return abs(d_left - d_right)

        assert gap(1e-4) <= 0.2 * gap(1e-3) + 1e-6


@pytest.mark.parametrize("p", PROFILES, ids=lambda p: p.family)
def test_second_derivative_matches_finite_differences(p):
    xs = np.linspace(p.x_left_joint - 0.5, p.x_blend + 3.0, 41)
    h = 1e-4
    fd = (evaluate(p, xs + h) - 2 * evaluate(p, xs) + evaluate(p, xs - h)) / h**2
    assert np.allclose(fd, evaluate(p, xs, 2), atol=1e-5)


@pytest.mark.parametrize("p", PROFILES, ids=lambda p: p.family)
def test_monotone_and_in_range(p):
    xs = np.concatenate([np.linspace(p.x_left_joint - 5, p.x_blend + 5, 20001), np.geomspace(p.x_blend + 5, 1e8, 2000)])
    u = evaluate(p, xs)
    assert np.all(np.diff(u) <= 0)
    assert np.all(u < 1)
    # strictly positive even where exp underflows
    assert np.all(np.isfinite(log_evaluate(p, xs)))


def test_invert_tail_examples():
    assert invert_tail(make_profile("algebraic", {"alpha": 2.0}), 1e-4) == pytest.approx(100.0, rel=1e-12)
    assert invert_tail(make_profile("stretched_exp", {"alpha": 0.5, "beta": 1.0}), math.exp(-10)) == pytest.approx(100.0, rel=1e-12)
    assert invert_tail(make_profile("log_power", {"alpha": 1.0}), 0.1) == pytest.approx(math.exp(10), rel=1e-12)


def test_invert_tail_rejects_bad_levels():
    p = make_profile("algebraic", {"alpha": 2.0})
    with pytest.raises(ValueError):
        invert_tail(p, 0.0)
    with pytest.raises(ValueError):
        invert_tail(p, 0.89)


def test_make_profile_rejections():
    with pytest.raises(ValueError):
        make_profile("algebraic", {"alpha": 2.0}, x_blend=1.0)  # tail(1) = 1 >= plateau
    with pytest.raises(ValueError):
        make_profile("log_power", {"alpha": 1.0}, x_blend=0.5)  # ln x needs x > 1
    with pytest.raises(ValueError):
        make_profile("stretched_exp", {"alpha": 1.5, "beta": 1.0})
    with pytest.raises(ValueError):
        make_profile("algebraic", {"alpha": 2.0}, blend_width=0.0)


def test_default_blend_point_leaves_room_below_plateau():
    for p in PROFILES:
        if p.family == "target_curve":
            continue  # blend point fixed at g(0) + 1
        assert p.tail.value(p.x_blend) <= p.plateau / 2.0


def test_slow_decay_examples():
    assert verify_slow_decay(make_profile("algebraic", {"alpha": 2.0}), [0.01]).passed[0.01]
    assert not verify_slow_decay(make_profile("exponential", {"alpha": 0.5}), [0.01]).passed[0.01]
    rep = verify_slow_decay(make_profile("tlnt", {"alpha": 1.0}), [0.01])
    assert rep.passed[0.01]
    assert rep.second_derivative_vanishes


def test_target_curve_profiles():
    q = from_target_curve(TargetCurve("quadratic"), 1.0)
    s = make_profile("stretched_exp", {"alpha": 0.5, "beta": 1.0})
    xs = np.array([10.0, 100.0, 1e4])
    assert np.allclose(evaluate(q, xs), evaluate(s, xs), rtol=1e-13)
    e = from_target_curve(TargetCurve("exponential"), 1.0)
    xs = np.array([3.0, 10.0, 1e5])
    assert np.allclose(evaluate(e, xs), 1.0 / xs, rtol=1e-13)
    q2 = from_target_curve(TargetCurve("quadratic"), 2.0)
    assert evaluate(q2, 100.0) == pytest.approx(math.exp(-20.0), rel=1e-13)
    with pytest.raises(ValueError):
        TargetCurve("cubic")


def test_from_config_roundtrip():
    p = make_profile("algebraic", {"alpha": 2.0})
    q = from_config(p.to_dict())
    xs = np.linspace(-5, 50, 101)
    assert np.array_equal(evaluate(p, xs), evaluate(q, xs))


def test_log_evaluate_far_tail():
    p = make_profile("stretched_exp", {"alpha": 0.5, "beta": 1.0})
    assert log_evaluate(p, 1e8) == pytest.approx(-1e4, rel=1e-14)


def test_tail_power_classifier():
    p = make_profile("algebraic", {"alpha": 2.0})
    beta = tail_beta(p)
    assert beta == 1.0
    bounded, _, _ = second_derivative_power_bound(p, beta)
    assert bounded
    assert not second_derivative_power_bound(p, 3.0)[0]
    assert tail_beta(make_profile("tlnt", {"alpha": 1.0})) is None


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(PROFILES), st.floats(0.0, 30.0))
def test_round_trip(p, s):
    x = p.x_blend * (1.0 + s) + s
    level = float(evaluate(p, x))
    if level > 0:
        assert invert_tail(p, level) == pytest.approx(x, rel=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(PROFILES), st.floats(-20.0, 200.0), st.floats(0.0, 50.0))
def test_monotone_property(p, x1, dx):
    assert evaluate(p, x1) >= evaluate(p, x1 + dx)
