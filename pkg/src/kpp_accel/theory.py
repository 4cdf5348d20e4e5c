"""Checks of the level-set bands, the comparison sandwich and uniform flatness.

Everything here works on finished run records or on level-set trajectories;
nothing mutates solver state.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .grid import first_derivative
from .levelsets import LevelSetTrajectory
from .nonlinearity import Nonlinearity
from .profiles import (InitialProfile, evaluate as u0_eval, log_evaluate, second_derivative_power_bound,
                       tail_beta)

SANDWICH_TOL = 1e-3
# relative slack in log space for band inequalities (equality cases at t = 0)
BAND_LOG_SLACK = 1e-9


# ---------------------------------------------------------------------------
# comparison functions


@dataclass(frozen=True)
class ComparisonBound:
    kind: str
    eps: float
    rho: float
    xi: float
    u0_at_xi: float
    B: float = math.nan
    delta_eff: float = math.nan
    s1: float = math.nan
    kappa: float = math.nan

    @property
    def xi1(self) -> float:
        return self.xi

    @property
    def xi2(self) -> float:
        return self.xi

    def to_dict(self) -> dict:
        return asdict(self)


def comparison_B(s1: float, M: float, rho: float, delta: float, fprime0: float) -> float:
    """Subsolution coefficient ``max(s1^-delta, 2M / (rho(1+delta) - f'(0)))``."""
    gap = rho * (1.0 + delta) - fprime0
    if not gap > 0:
        raise ValueError("need rho (1 + delta) > f'(0)")
    return max(s1 ** (-delta), 2.0 * M / gap)


def _scan_points(p: InitialProfile, x_far: float):
    near = np.linspace(p.x_left_joint - 1.0, p.x_blend + 1.0, 4001)
    far = np.geomspace(max(p.x_blend + 1.0, 1.0), x_far, 6000)
    return np.unique(np.concatenate([near, far]))


def second_derivative_threshold(p: InitialProfile, c: float, x_far: float = 1e12) -> float:
    """Smallest x with ``|u0''(y)| <= c u0(y)`` for every sampled ``y >= x``.

    The last failing sample interval is refined by bisection on the analytic
    profile.  Raises if the inequality fails at the far end of the samples.
    """
    xs = _scan_points(p, x_far)
    # tail samples are evaluated exactly in ratio form (u0 underflows far out)
    tail = xs >= p.x_blend
    ratio = np.empty_like(xs)
    ratio[~tail] = np.abs(u0_eval(p, xs[~tail], 2)) / u0_eval(p, xs[~tail], 0)
    ratio[tail] = np.abs(p.tail.d2_over_value(xs[tail]))
    ok = ratio <= c
    if not ok[-1]:
        raise ValueError(f"|u0''| <= {c:g} u0 fails at x={xs[-1]:.3g}; tail hypothesis not verifiable")
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(xs[0])
    k = int(bad[-1])
    a, b = xs[k], xs[k + 1]

    def g(x):
        return abs(float(u0_eval(p, x, 2))) - c * float(u0_eval(p, x, 0))

    if g(a) > 0 >= g(b):
        return float(brentq(g, a, b, xtol=1e-14, rtol=1e-14))
    return float(b)


def derive_comparison_params(p: InitialProfile, nl: Nonlinearity, eps: float, kind: str,
                             x_far: float = 1e12) -> ComparisonBound:
    """Constants of the explicit super- (``kind="super"``) or subsolution (``"sub"``)."""
    r = nl.fprime0
    if not 0 < eps < r:
        raise ValueError(f"eps must lie in (0, f'(0)) = (0, {r})")
    if kind == "super":
        rho = r + eps / 2.0
        xi = second_derivative_threshold(p, eps / 2.0, x_far)
        return ComparisonBound(kind="super", eps=eps, rho=rho, xi=xi, u0_at_xi=float(u0_eval(p, xi)))
    if kind != "sub":
        raise ValueError("kind must be 'super' or 'sub'")
    d = nl.delta
    rho = r - eps / 2.0
    if rho * (1.0 + d) <= r:
        rho = 0.5 * (r / (1.0 + d) + r)
    c = min(r - rho, (rho * (1.0 + d) - r) / (2.0 * (1.0 + d)))
    xi = second_derivative_threshold(p, c, x_far)
    # kappa = inf of u0 left of xi (profiles are nonincreasing)
    kappa = float(min(u0_eval(p, xi), np.min(u0_eval(p, np.linspace(p.x_left_joint - 1.0, xi, 2001)))))
    s1 = min(nl.s0, kappa)
    B = comparison_B(s1, nl.M_low, rho, d, r)
    return ComparisonBound(kind="sub", eps=eps, rho=rho, xi=xi, u0_at_xi=float(u0_eval(p, xi)),
                           B=B, delta_eff=d, s1=s1, kappa=kappa)


def supersolution_value(cb: ComparisonBound, p: InitialProfile, t: float, x):
    """``min(u0(x) e^{rho t} / u0(xi1), 1)`` for ``x >= xi1``."""
    if cb.kind != "super":
        raise ValueError("bound is not a supersolution")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < cb.xi):
        raise ValueError(f"supersolution defined only for x >= xi1 = {cb.xi}")
    val = np.exp(np.minimum(log_evaluate(p, xa) + cb.rho * t - math.log(cb.u0_at_xi), 0.0))
    return float(val) if np.ndim(x) == 0 else val


def subsolution_value(cb: ComparisonBound, p: InitialProfile, t: float, x):
    """``max(s - B s^{1+delta}, 0)`` with ``s = u0(x) e^{rho t}``."""
    if cb.kind != "sub":
        raise ValueError("bound is not a subsolution")
    ls = np.asarray(log_evaluate(p, np.asarray(x, dtype=float)) + cb.rho * t)
    # g(s) <= 0 once s >= B^{-1/delta}
    cut = -math.log(cb.B) / cb.delta_eff
    s = np.exp(np.minimum(ls, cut))
    val = np.where(ls >= cut, 0.0, np.maximum(s - cb.B * s ** (1.0 + cb.delta_eff), 0.0))
    return float(val) if np.ndim(x) == 0 else val


@dataclass
class SandwichReport:
    passed: bool
    tol: float
    worst_upper: float
    worst_upper_at: tuple
    worst_lower: float
    worst_lower_at: tuple
    per_time: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"check": "sandwich", "pass": self.passed, "tol": self.tol,
                "worst_margin": max(self.worst_upper, self.worst_lower),
                "worst_upper": self.worst_upper, "worst_upper_at": list(self.worst_upper_at),
                "worst_lower": self.worst_lower, "worst_lower_at": list(self.worst_lower_at)}


def sandwich_report(record, cb_super: ComparisonBound, cb_sub: ComparisonBound, p: InitialProfile,
                    tol: float = SANDWICH_TOL) -> SandwichReport:
    """Worst ``max(u - u_super, 0)`` on ``x >= xi1`` and ``max(u_sub - u, 0)`` over all snapshots."""
    if not record.snapshots:
        raise ValueError("run record has no snapshots; run with keep_snapshots=True")
    wu, wu_at, wl, wl_at = 0.0, (math.nan, math.nan), 0.0, (math.nan, math.nan)
    per_time = []
    for t, x, u in record.snapshots:
        right = x >= cb_super.xi
        up = np.maximum(u[right] - supersolution_value(cb_super, p, t, x[right]), 0.0)
        lo = np.maximum(subsolution_value(cb_sub, p, t, x) - u, 0.0)
        iu, il = int(np.argmax(up)), int(np.argmax(lo))
        per_time.append((t, float(up[iu]), float(lo[il])))
        if up[iu] > wu:
            wu, wu_at = float(up[iu]), (t, float(x[right][iu]))
        if lo[il] > wl:
            wl, wl_at = float(lo[il]), (t, float(x[il]))
    return SandwichReport(passed=bool(wu < tol and wl < tol), tol=tol, worst_upper=wu, worst_upper_at=wu_at,
                          worst_lower=wl, worst_lower_at=wl_at, per_time=per_time)


# ---------------------------------------------------------------------------
# level-set bands


@dataclass
class BandReport:
    """Band verdicts along one trajectory.

    ``entry_time`` is the empirical ``T``: the earliest sample from which
    membership holds at every later sample.  Brief passages through the band
    before it (the band collapses to a point as t -> 0) are kept in
    ``first_passage_time`` and ``transient_exits``; ``re_exits`` lists exits
    after ``entry_time`` and is empty by construction when entry happened.
    """
    check: str
    params: dict
    entry_time: float
    first_passage_time: float
    transient_exits: list
    re_exits: list
    members: list
    times: list
    passed: bool
    worst_margin: float = math.nan

    @property
    def entered(self) -> bool:
        return math.isfinite(self.entry_time)

    def to_dict(self) -> dict:
        return {"check": self.check, "params": self.params, "entry_time": _json_num(self.entry_time),
                "first_passage_time": _json_num(self.first_passage_time),
                "transient_exits": [float(t) for t in self.transient_exits],
                "re_exits": [float(t) for t in self.re_exits],
                "worst_margin": _json_num(self.worst_margin), "pass": self.passed}


def _json_num(v):
    return None if v is None or not math.isfinite(v) else float(v)


MIN_DWELL_SAMPLES = 2


def _entry_analysis(times, member):
    """(entry, first passage, exits between them, exits after entry) for samples with t > 0."""
    pairs = [(float(t), bool(m)) for t, m in zip(times, member) if t > 0]
    first = next((t for t, m in pairs if m), math.inf)
    run = 0
    for _, m in reversed(pairs):
        if not m:
            break
        run += 1
    entry = pairs[len(pairs) - run][0] if run >= MIN_DWELL_SAMPLES else math.inf
    transient = [t for t, m in pairs if first < t < entry and not m]
    re_exits = [t for t, m in pairs if t > entry and not m]
    return entry, first, transient, re_exits


def _band_report(check, params, t, member, margin):
    entry, first, transient, re_exits = _entry_analysis(t, member)
    after = t >= entry
    worst = float(np.min(margin[after])) if np.any(after) else math.nan
    return BandReport(check=check, params=params, entry_time=entry, first_passage_time=first,
                      transient_exits=transient, re_exits=re_exits, members=member.tolist(), times=t.tolist(),
                      passed=bool(math.isfinite(entry) and not re_exits), worst_margin=worst)


def band_membership(traj: LevelSetTrajectory, p: InitialProfile, nl: Nonlinearity, eps: float,
                    gamma: float, Gamma: float) -> BandReport:
    """Samples inside ``u0^{-1}[gamma e^{-(f'(0)+eps)t}, Gamma e^{-(f'(0)-eps)t}]``.

    Checked as ``u0(x_max) >= gamma e^{-(f'(0)+eps)t}`` and
    ``u0(x_min) <= Gamma e^{-(f'(0)-eps)t}``, in log space.
    """
    r = nl.fprime0
    if not 0 < eps < r:
        raise ValueError(f"eps must lie in (0, f'(0)) = (0, {r})")
    t, xmin, xmax, empty = traj.arrays()
    sel = ~empty
    t, xmin, xmax = t[sel], xmin[sel], xmax[sel]
    lo_margin = log_evaluate(p, xmax) - (math.log(gamma) - (r + eps) * t)
    hi_margin = (math.log(Gamma) - (r - eps) * t) - log_evaluate(p, xmin)
    slack = BAND_LOG_SLACK * np.maximum(1.0, np.abs(log_evaluate(p, xmin)))
    member = (lo_margin >= -slack) & (hi_margin >= -slack)
    return _band_report("band_membership", {"lambda": traj.lam, "eps": eps, "gamma": gamma, "Gamma": Gamma},
                        t, member, np.minimum(lo_margin, hi_margin))


def ode_reduction_residual(traj: LevelSetTrajectory, p: InitialProfile, nl: Nonlinearity, eps: float) -> BandReport:
    """``u0(x) e^{(f'(0)-eps)t} <= lambda <= u0(x) e^{(f'(0)+eps)t}`` along the trajectory."""
    r = nl.fprime0
    if not 0 < eps < r:
        raise ValueError(f"eps must lie in (0, f'(0)) = (0, {r})")
    t, xmin, xmax, empty = traj.arrays()
    sel = ~empty
    t, x = t[sel], xmin[sel]
    lu = log_evaluate(p, x)
    ll = math.log(traj.lam)
    left = ll - (lu + (r - eps) * t)
    right = (lu + (r + eps) * t) - ll
    slack = BAND_LOG_SLACK * np.maximum(1.0, np.abs(lu))
    member = (left >= -slack) & (right >= -slack)
    return _band_report("ode_reduction", {"lambda": traj.lam, "eps": eps}, t, member, np.minimum(left, right))


@dataclass
class RefinedBandReport:
    lam: float
    window: tuple
    bracket: tuple
    times: list
    ratios: list
    r_min: float
    r_max: float
    passed: bool
    beta: float

    def to_dict(self) -> dict:
        return {"check": "refined_band", "params": {"lambda": self.lam, "window": list(self.window),
                                                    "bracket": list(self.bracket), "beta": self.beta},
                "r_min": self.r_min, "r_max": self.r_max, "entry_time": self.window[0],
                "worst_margin": min(self.r_min - self.bracket[0], self.bracket[1] - self.r_max),
                "pass": self.passed}


def refined_band(traj: LevelSetTrajectory, p: InitialProfile, nl: Nonlinearity, window=(10.0, 25.0),
                 bracket=(0.02, 50.0)) -> RefinedBandReport:
    """Track ``r(t) = u0(x_min(t)) e^{f'(0) t}`` and require it inside ``bracket`` over ``window``.

    Requires ``u0'' = O(u0^{1+beta})`` with ``beta >= nu`` and a strict upper
    envelope ``(mu, nu)`` on ``f``.
    """
    if nl.mu is None:
        raise ValueError("nonlinearity has no strict upper envelope (mu, nu)")
    beta = tail_beta(p)
    if beta is None:
        raise ValueError(f"{p.family} tail has no power bound u0'' = O(u0^(1+beta))")
    bounded, _, _ = second_derivative_power_bound(p, beta)
    if not bounded:
        raise ValueError(f"u0''/u0^(1+{beta:g}) is not bounded on the sampled tail")
    if beta < nl.nu:
        raise ValueError(f"need beta >= nu, got beta={beta:g}, nu={nl.nu:g}")
    t, x, _ = traj.window(*window)
    ratios = np.exp(log_evaluate(p, x) + nl.fprime0 * t)
    lo, hi = bracket
    passed = bool(len(t) > 0 and np.all(ratios >= lo) and np.all(ratios <= hi))
    return RefinedBandReport(lam=traj.lam, window=tuple(window), bracket=tuple(bracket), times=t.tolist(),
                             ratios=ratios.tolist(), r_min=float(ratios.min()), r_max=float(ratios.max()),
                             passed=passed, beta=beta)


def uniform_lower_constant(reports) -> float:
    """``min over levels and times of r(t) / lambda``: the common constant ``c`` of the lower bound."""
    return float(min(min(r.ratios) / r.lam for r in reports))


# ---------------------------------------------------------------------------
# flatness


@dataclass
class FlatnessRecord:
    t: float
    sup_ux: float
    sup_v: float
    m_plus: float
    m_minus: float

    def to_dict(self) -> dict:
        return asdict(self)


def flatness_metrics(state) -> FlatnessRecord:
    """sup |u_x|, sup |u_x/u| and the one-sided sups of ``v = u_x/u``."""
    x, u = state.grid.nodes, state.u
    if len(x) < 3:
        raise ValueError("need at least 3 nodes")
    ux = first_derivative(x, u)
    pos = u > 0
    v = np.zeros_like(u)
    v[pos] = ux[pos] / u[pos]
    return FlatnessRecord(t=float(state.t), sup_ux=float(np.max(np.abs(ux))), sup_v=float(np.max(np.abs(v))),
                          m_plus=float(max(v.max(), 0.0)), m_minus=float(min(v.min(), 0.0)))


def flatness_observer(state) -> dict:
    rec = flatness_metrics(state)
    return {"sup_ux": rec.sup_ux, "sup_v": rec.sup_v, "m_plus": rec.m_plus, "m_minus": rec.m_minus}


@dataclass
class FlatnessReport:
    passed: bool
    plus_monotone: bool
    minus_monotone: bool
    worst_plus_increase: float
    worst_minus_decrease: float
    decay_ratio: float
    ratio_times: tuple
    ratio_limit: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["check"] = "flatness"
        d["pass"] = d.pop("passed")
        return d


def flatness_report(records, slack: float = 1e-6, ratio_times=None, ratio_limit: float = 0.5) -> FlatnessReport:
    """Monotone envelopes of ``M+`` / ``M-`` and decay of ``sup |u_x/u|``.

    ``ratio_times=(t_a, t_b)`` compares ``sup_v(t_b) < ratio_limit * sup_v(t_a)``;
    default is ``(t_end/2, t_end)``.
    """
    t = np.array([r.t for r in records])
    mp = np.array([r.m_plus for r in records])
    mm = np.array([r.m_minus for r in records])
    sv = np.array([r.sup_v for r in records])
    inc_plus = float(np.max(np.diff(mp), initial=0.0))
    dec_minus = float(np.max(-np.diff(mm), initial=0.0))
    if ratio_times is None:
        ratio_times = (t[-1] / 2.0, t[-1])
    ia = int(np.argmin(np.abs(t - ratio_times[0])))
    ib = int(np.argmin(np.abs(t - ratio_times[1])))
    ratio = float(sv[ib] / sv[ia]) if sv[ia] > 0 else math.nan
    plus_ok, minus_ok = inc_plus <= slack, dec_minus <= slack
    return FlatnessReport(passed=bool(plus_ok and minus_ok and ratio < ratio_limit), plus_monotone=plus_ok,
                          minus_monotone=minus_ok, worst_plus_increase=inc_plus, worst_minus_decrease=dec_minus,
                          decay_ratio=ratio, ratio_times=(float(t[ia]), float(t[ib])), ratio_limit=ratio_limit)


def records_from_rows(rows) -> list[FlatnessRecord]:
    return [FlatnessRecord(t=r["t"], sup_ux=r["sup_ux"], sup_v=r["sup_v"], m_plus=r["m_plus"],
                           m_minus=r["m_minus"]) for r in rows]


def log_derivative_lp(p: InitialProfile, power: float = 2.0, X_list=(1e2, 1e3, 1e4, 1e5, 1e6), rtol: float = 1e-2):
    """Partial integrals of ``|u0'/u0|^power`` over ``[-X, X]``.

    Returns ``(converged, integrals)``; converged when the last relative
    increment is below ``rtol``.
    """
    def integrand(x):
        u = u0_eval(p, x, 0)
        return abs(u0_eval(p, x, 1) / u) ** power

    def tail_integrand(x):
        return abs(float(p.tail.d1_over_value(x))) ** power

    blend = quad(integrand, p.x_left_joint, p.x_blend, limit=200)[0]
    vals, acc, prev = [], blend, p.x_blend
    for X in sorted(X_list):
        if X <= prev:
            vals.append(acc)
            continue
        # integrate in log x so wide ranges stay accurate
        acc += quad(lambda s: tail_integrand(math.exp(s)) * math.exp(s), math.log(prev), math.log(X), limit=400)[0]
        prev = X
        vals.append(acc)
    converged = bool(len(vals) >= 2 and abs(vals[-1] - vals[-2]) <= rtol * abs(vals[-1]))
    return converged, vals
