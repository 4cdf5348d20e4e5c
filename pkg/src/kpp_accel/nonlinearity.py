"""KPP reaction terms and numerical checks of their structural hypotheses.

A :class:`Nonlinearity` bundles the reaction rate ``f`` on ``[0, 1]`` with its
linearization rate ``f'(0)`` and the envelope constants used by the comparison
arguments:

    f(s) >= f'(0) s - M s^(1+delta)     on (0, s0]       (lower envelope)
    f(s) <= f'(0) s - mu s^(1+nu)       on (0, 1]        (strict upper envelope)

Only the logistic family ``r s (1 - s)`` is built in.  A zero reaction term is
also provided so the solver can be checked against the heat kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

CLAMP_TOL = 1e-12
ENVELOPE_TOL = 1e-12


@dataclass(frozen=True)
class Nonlinearity:
    """Reaction term with its KPP constants.

    ``f`` must accept numpy arrays.  ``flow(s, t)``, when given, is the closed
    form solution of ``dU/dt = f(U), U(0) = s``; ``fprime`` is ``f'`` on [0, 1].
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    fprime0: float
    delta: float
    s0: float
    M_low: float
    mu: float | None = None
    nu: float | None = None
    params: dict = field(default_factory=dict)
    fprime: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False, compare=False)
    flow: Callable[[np.ndarray, float], np.ndarray] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.fprime0 < 0:
            raise ValueError(f"fprime0 must be non-negative, got {self.fprime0}")
        if not (0.0 < self.s0 <= 1.0):
            raise ValueError(f"s0 must lie in (0, 1], got {self.s0}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.M_low < 0:
            raise ValueError(f"M_low must be non-negative, got {self.M_low}")
        if (self.mu is None) != (self.nu is None):
            raise ValueError("mu and nu must be given together")
        ends = np.asarray(self.f(np.array([0.0, 1.0])), dtype=float)
        if ends[0] != 0.0 or ends[1] != 0.0:
            raise ValueError(f"f must vanish exactly at 0 and 1, got f(0)={ends[0]}, f(1)={ends[1]}")

    def __call__(self, s):
        return evaluate(self, s)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


def make_logistic(r: float) -> Nonlinearity:
    """Logistic term ``r s (1 - s)``; concave, so every envelope holds with delta = nu = 1."""
    r = float(r)
    if not r > 0:
        raise ValueError(f"logistic rate must be positive, got {r}")

    def f(s):
        s = np.asarray(s, dtype=float)
        return r * s * (1.0 - s)

    def fprime(s):
        return r * (1.0 - 2.0 * np.asarray(s, dtype=float))

    def flow(s, t):
        s = np.asarray(s, dtype=float)
        # e^{-rt} form stays finite for large t
        em = np.exp(-r * t)
        return s / (s + (1.0 - s) * em)

    return Nonlinearity(
        name="logistic", f=f, fprime0=r, delta=1.0, s0=1.0, M_low=r,
        mu=r, nu=1.0, params={"r": r}, fprime=fprime, flow=flow,
    )


def make_zero() -> Nonlinearity:
    """Pure-diffusion reference (f = 0).  Not a KPP term; used for heat-kernel checks."""

    def f(s):
        return np.zeros_like(np.asarray(s, dtype=float))

    def flow(s, t):
        return np.asarray(s, dtype=float).copy()

    return Nonlinearity(
        name="zero", f=f, fprime0=0.0, delta=1.0, s0=1.0, M_low=0.0,
        params={}, fprime=f, flow=flow,
    )


_REGISTRY = {
    "logistic": lambda params: make_logistic(params.get("r", 1.0)),
    "zero": lambda params: make_zero(),
}


def from_config(name: str, params: dict | None = None) -> Nonlinearity:
    try:
        builder = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown nonlinearity {name!r}; known: {sorted(_REGISTRY)}") from None
    return builder(dict(params or {}))


def evaluate(nl: Nonlinearity, s):
    """Return ``f(s)``.  Values within 1e-12 of [0, 1] are clamped; anything further is rejected."""
    arr = np.asarray(s, dtype=float)
    if np.any(arr < -CLAMP_TOL) or np.any(arr > 1.0 + CLAMP_TOL) or np.any(np.isnan(arr)):
        raise ValueError(f"f evaluated outside [0, 1]: range [{arr.min()}, {arr.max()}]")
    out = nl.f(np.clip(arr, 0.0, 1.0))
    if np.ndim(s) == 0:
        return float(out)
    return out


def sample_grid(n_samples: int) -> np.ndarray:
    """Composite grid of (0, 1]: half geometric from 1e-10, half uniform."""
    n_geo = n_samples // 2
    n_uni = n_samples - n_geo
    geo = np.geomspace(1e-10, 1.0, n_geo)
    uni = np.linspace(1.0 / n_uni, 1.0, n_uni)
    return np.unique(np.concatenate([geo, uni]))


@dataclass
class EnvelopeReport:
    margins: dict
    locations: dict
    passed: bool
    n_samples: int

    def failures(self) -> list[str]:
        return [k for k, v in self.margins.items() if not _margin_ok(k, v)]


def _margin_ok(name, margin):
    # positivity is strict on the open interval; the envelopes allow round-off
    if name == "positivity":
        return margin > 0.0
    return margin >= -ENVELOPE_TOL


def verify_envelopes(nl: Nonlinearity, n_samples: int = 10_000) -> EnvelopeReport:
    """Sample every declared inequality and report its worst signed margin.

    Nothing is raised on failure; inspect ``report.passed`` / ``report.failures()``.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    s = sample_grid(n_samples)
    fs = nl.f(s)
    r = nl.fprime0
    margins, where = {}, {}

    def record(name, values, at):
        i = int(np.argmin(values))
        margins[name] = float(values[i])
        where[name] = float(at[i])

    interior = s < 1.0
    record("positivity", fs[interior], s[interior])
    record("kpp_upper", r * s[interior] - fs[interior], s[interior])
    low = s <= nl.s0
    record("lower_envelope", fs[low] - (r * s[low] - nl.M_low * s[low] ** (1.0 + nl.delta)), s[low])
    if nl.mu is not None:
        record("strict_upper_envelope", r * s - nl.mu * s ** (1.0 + nl.nu) - fs, s)
    if nl.fprime is not None:
        # f'(s) <= f(s)/s, i.e. nonincreasing growth rate
        record("growth_rate_nonincreasing", fs / s - nl.fprime(s), s)

    passed = all(_margin_ok(k, v) for k, v in margins.items())
    return EnvelopeReport(margins=margins, locations=where, passed=passed, n_samples=len(s))
