"""Traveling fronts ``u = phi(x - c t)`` of the KPP equation.

The profile solves ``phi'' + c phi' + f(phi) = 0`` with ``phi(-inf) = 1`` and
``phi(+inf) = 0``.  It is found by shooting from the saddle at 1 along its
unstable manifold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .nonlinearity import Nonlinearity, evaluate

SHOOT_EPS = 1e-6
STOP_LEVEL = 1e-8
TAIL_WINDOW = (1e-7, 1e-4)


def minimal_speed(nl: Nonlinearity) -> float:
    """``c* = 2 sqrt(f'(0))``."""
    return 2.0 * math.sqrt(nl.fprime0)


def decay_rate(c: float, nl: Nonlinearity) -> float:
    """Smaller root of ``l^2 - c l + f'(0) = 0``: the tail rate of ``phi_c``."""
    disc = c * c - 4.0 * nl.fprime0
    if disc < -1e-14 * max(1.0, c * c):
        raise ValueError(f"no front with speed c={c} below c*={minimal_speed(nl)}")
    disc = max(disc, 0.0)
    # cancellation-free form of (c - sqrt(disc)) / 2
    return 2.0 * nl.fprime0 / (c + math.sqrt(disc)) if c > 0 else 0.0


def expected_speed_from_tail(alpha: float, nl: Nonlinearity) -> float:
    """Spreading speed for data ``~ e^{-alpha x}``: ``alpha + f'(0)/alpha`` below ``sqrt(f'(0))``, else ``c*``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if alpha < math.sqrt(nl.fprime0):
        return alpha + nl.fprime0 / alpha
    return minimal_speed(nl)


@dataclass
class TravelingFront:
    c: float
    z: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    residual: float
    tail_rate: float

    def __call__(self, z):
        return np.interp(z, self.z, self.phi)

    def rows(self):
        for a, b, d in zip(self.z, self.phi, self.dphi):
            yield {"z": float(a), "phi": float(b), "dphi": float(d)}


def _fprime_one(nl: Nonlinearity) -> float:
    if nl.fprime is not None:
        return float(nl.fprime(1.0))
    h = 1e-6
    return (0.0 - float(evaluate(nl, 1.0 - h))) / h


def solve_profile(c: float, nl: Nonlinearity, n_out: int = 4001) -> TravelingFront:
    """Monotone front of speed ``c >= c*`` normalized by ``phi(0) = 1/2``.

    ``residual`` is the max of ``|phi'' + c phi' + f(phi)|`` with ``phi''``
    from fourth-order differences of the dense output; ``tail_rate`` is the
    fitted ``-d ln phi / dz`` where ``phi`` lies in ``[1e-7, 1e-4]``.
    """
    decay_rate(c, nl)
    if nl.fprime0 <= 0:
        raise ValueError("front needs f'(0) > 0")
    fp1 = _fprime_one(nl)
    # unstable eigenvalue at (1, 0): mu^2 + c mu + f'(1) = 0, positive root
    mu = (-c + math.sqrt(c * c - 4.0 * fp1)) / 2.0

    def rhs(_, y):
        s = min(max(y[0], 0.0), 1.0)
        return [y[1], -c * y[1] - float(nl.f(s))]

    def low(_, y):
        return y[0] - STOP_LEVEL

    low.terminal = True
    low.direction = -1
    y0 = [1.0 - SHOOT_EPS, -SHOOT_EPS * mu]
    sol = solve_ivp(rhs, (0.0, 1e4), y0, method="DOP853", rtol=1e-12, atol=1e-15,
                    events=low, dense_output=True)
    if sol.status != 1:
        raise RuntimeError(f"shooting did not reach phi={STOP_LEVEL}: {sol.message}")
    z_end = float(sol.t_events[0][0])
    zz = np.linspace(0.0, z_end, 200001)
    yy = sol.sol(zz)
    if np.any(np.diff(yy[0]) > 0) or np.any(yy[0] < 0):
        raise RuntimeError("shot trajectory is not monotone")
    k = int(np.searchsorted(-yy[0], -0.5))
    w = (yy[0][k - 1] - 0.5) / (yy[0][k - 1] - yy[0][k])
    z_half = zz[k - 1] + w * (zz[k] - zz[k - 1])

    # residual with fourth-order central differences of the dense output
    hz = 1e-3
    zs = np.linspace(hz * 2, z_end - hz * 2, 20001)
    p = [sol.sol(zs + j * hz)[0] for j in (-2, -1, 0, 1, 2)]
    d1 = (p[0] - 8 * p[1] + 8 * p[3] - p[4]) / (12 * hz)
    d2 = (-p[0] + 16 * p[1] - 30 * p[2] + 16 * p[3] - p[4]) / (12 * hz * hz)
    f = np.asarray(nl.f(np.clip(p[2], 0.0, 1.0)), dtype=float)
    residual = float(np.max(np.abs(d2 + c * d1 + f)))

    lo, hi = TAIL_WINDOW
    sel = (yy[0] >= lo) & (yy[0] <= hi)
    slope = np.polyfit(zz[sel], np.log(yy[0][sel]), 1)[0]

    zo = np.linspace(0.0, z_end, n_out)
    yo = sol.sol(zo)
    return TravelingFront(c=float(c), z=zo - z_half, phi=yo[0], dphi=yo[1], residual=residual,
                          tail_rate=float(-slope))
