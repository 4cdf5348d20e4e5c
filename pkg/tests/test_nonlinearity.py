import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kpp_accel.nonlinearity import (Nonlinearity, evaluate, from_config, make_logistic, make_zero,
                                    sample_grid, verify_envelopes)


def test_logistic_values():
    nl = make_logistic(1.0)
    assert evaluate(nl, 0.5) == 0.25
    assert evaluate(nl, 0.0) == 0.0
    assert evaluate(nl, 1.0) == 0.0
    assert evaluate(nl, 0.25) == 0.1875
    assert make_logistic(2.0).fprime0 == 2.0


def test_logistic_constants():
    nl = make_logistic(3.0)
    assert (nl.delta, nl.s0, nl.M_low, nl.mu, nl.nu) == (1.0, 1.0, 3.0, 3.0, 1.0)


@pytest.mark.parametrize("r", [0.0, -1.0])
def test_logistic_rejects_nonpositive_rate(r):
    with pytest.raises(ValueError):
        make_logistic(r)


def test_clamp_and_reject():
    nl = make_logistic(1.0)
    assert evaluate(nl, 1.0 + 1e-13) == 0.0
    assert evaluate(nl, -1e-13) == 0.0
    with pytest.raises(ValueError):
        evaluate(nl, 1.0 + 1e-9)
    with pytest.raises(ValueError):
        evaluate(nl, -1e-9)


def test_construction_requires_zero_endpoints():
    with pytest.raises(ValueError):
        Nonlinearity(name="bad", f=lambda s: s * (1.1 - s), fprime0=1.1, delta=1.0, s0=1.0, M_low=1.0)


def test_envelopes_pass_for_logistic():
    rep = verify_envelopes(make_logistic(1.0), 10_000)
    assert rep.passed, rep.margins
    assert {"positivity", "kpp_upper", "lower_envelope", "strict_upper_envelope"} <= set(rep.margins)


def test_wrong_upper_envelope_detected():
    nl = dataclasses.replace(make_logistic(1.0), mu=2.0, nu=1.0)
    rep = verify_envelopes(nl, 10_000)
    assert not rep.passed
    assert "strict_upper_envelope" in rep.failures()
    assert rep.locations["strict_upper_envelope"] > 0.5


def test_wrong_lower_envelope_detected():
    nl = dataclasses.replace(make_logistic(1.0), M_low=0.0)
    rep = verify_envelopes(nl, 10_000)
    assert rep.failures() == ["lower_envelope"]


def test_sample_count_precondition():
    with pytest.raises(ValueError):
        verify_envelopes(make_logistic(1.0), 50)


def test_sample_grid_resolves_small_s():
    s = sample_grid(1000)
    assert s.min() <= 1e-10 and s.max() == 1.0
    assert np.all(np.diff(s) > 0)


def test_zero_nonlinearity_and_registry():
    z = make_zero()
    assert evaluate(z, 0.3) == 0.0
    assert from_config("logistic", {"r": 2}).fprime0 == 2.0
    with pytest.raises(ValueError):
        from_config("bistable", {})


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 20.0))
def test_every_logistic_passes_envelopes(r):
    assert verify_envelopes(make_logistic(r), 2000).passed


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0))
def test_evaluate_is_pure_and_bounded(s):
    nl = make_logistic(1.0)
    a, b = evaluate(nl, s), evaluate(nl, s)
    assert a == b
    assert 0.0 <= a <= nl.fprime0 * s
