"""Time integration of u_t = u_xx + f(u) on an expanding nonuniform grid.

One step of size dt is the Strang composition

    R(dt/2) o D(dt) o R(dt/2)

with ``R`` a classical RK4 step of the pointwise reaction ODE and ``D`` a
Crank-Nicolson diffusion step (tridiagonal solve).  The left boundary is
homogeneous Neumann; the right boundary node is pinned to the far-field value
``U(t; x_N)`` of the reaction ODE started from ``u0(x_N)``, where diffusion is
negligible compared with reaction.

Step size is adapted by step doubling against an absolute max-norm target.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from . import grid as grid_mod
from .grid import Grid
from .levelsets import LevelSetTrajectory, crossings
from .nonlinearity import Nonlinearity
from .profiles import InitialProfile, evaluate as u0_eval

log = logging.getLogger(__name__)

RANGE_TOL = 1e-14
MONOTONE_TOL = 1e-10
# overshoots this small are round-off (1 - u falls below double resolution once t > ~37)
ROUNDOFF_PROJECTION = 1e-12


class InvariantViolation(RuntimeError):
    """Range or monotonicity check failed after a step."""

    def __init__(self, message, t=None, node=None, x=None, value=None):
        super().__init__(message)
        self.diagnostic = {"t": t, "node": node, "x": x, "value": value}


class RunFailed(RuntimeError):
    """A run aborted; ``record`` holds the observations made before the failure."""

    def __init__(self, message, record):
        super().__init__(message)
        self.record = record


@dataclass
class SolverConfig:
    """Integration settings.

    ``dt=None`` selects adaptive step doubling with target local error ``tol``;
    a float fixes the step.
    """

    dt: float | None = None
    tol: float = 1e-7
    dt_min: float = 1e-6
    dt_init: float = 1e-3
    obs_dt: float = 0.5
    expansion_margin: float = 0.2
    expansion_factor: float = 2.0
    check_monotone: bool = True
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.dt is not None and not 0 < self.dt <= self.obs_dt:
            raise ValueError("fixed dt must satisfy 0 < dt <= obs_dt")
        if not 0 < self.expansion_margin < 1:
            raise ValueError("expansion_margin must lie in (0, 1)")
        if self.expansion_factor <= 1:
            raise ValueError("expansion_factor must exceed 1")

    @property
    def dt_max(self) -> float:
        return self.obs_dt


@dataclass(frozen=True)
class GridSpec:
    """How to lay out the initial grid for a profile.

    ``x_left`` and ``left_anchor`` are offsets from the left blend joint when
    ``relative`` is true.  ``h0`` is the spacing near the anchor.
    """

    kind: str = "log_stretched"
    x_left: float = -10.0
    x_right: float = 40.0
    left_anchor: float = 0.0
    h0: float = 0.1
    stretch: float = grid_mod.DEFAULT_SIGMA
    budget: int = grid_mod.DEFAULT_BUDGET
    relative: bool = True

    def build(self, p: InitialProfile | None = None) -> Grid:
        shift = p.x_left_joint if (self.relative and p is not None) else 0.0
        xl, xr = self.x_left + shift, self.x_right + shift
        if self.kind == "uniform":
            n = max(int(math.ceil((xr - xl) / self.h0)), grid_mod.MIN_INTERVALS)
            return grid_mod.build("uniform", xl, xr, n, budget=self.budget)
        anchor = self.left_anchor + shift
        sigma = self.stretch
        xi_span = sigma * (anchor - xl) + math.log1p(sigma * (xr - anchor))
        n = max(int(math.ceil(xi_span / (self.h0 * sigma))), grid_mod.MIN_INTERVALS)
        return grid_mod.build("log_stretched", xl, xr, n, stretch=sigma, left_anchor=anchor,
                              budget=self.budget)


@dataclass
class StepStats:
    steps: int = 0
    rejected: int = 0
    dt_history: list = field(default_factory=list)
    expansions: list = field(default_factory=list)


@dataclass
class CauchyState:
    t: float
    grid: Grid
    u: np.ndarray
    right_farfield: float
    stats: StepStats = field(default_factory=StepStats)


# ---------------------------------------------------------------------------
# far field


def right_boundary_value(p: InitialProfile, nl: Nonlinearity, t: float, x):
    """``U(t; x)`` with ``dU/dt = f(U)``, ``U(0) = u0(x)``."""
    s = u0_eval(p, x, 0)
    return reaction_flow(nl, s, t)


def reaction_flow(nl: Nonlinearity, s, t: float):
    if nl.flow is not None:
        out = nl.flow(s, t)
        return float(out) if np.ndim(s) == 0 else out
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if t == 0:
        out = s_arr.copy()
    else:
        sol = solve_ivp(lambda _, y: nl.f(np.clip(y, 0.0, 1.0)), (0.0, t), s_arr,
                        method="DOP853", rtol=1e-10, atol=1e-300)
        out = sol.y[:, -1]
    return float(out[0]) if np.ndim(s) == 0 else out


# ---------------------------------------------------------------------------
# splitting pieces


def _rk4(nl: Nonlinearity, u: np.ndarray, dt: float) -> np.ndarray:
    f = nl.f
    k1 = f(u)
    k2 = f(u + 0.5 * dt * k1)
    k3 = f(u + 0.5 * dt * k2)
    k4 = f(u + dt * k3)
    return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Diffusion:
    """Crank-Nicolson operator for one grid (Neumann left, Dirichlet right)."""

    def __init__(self, g: Grid):
        x = g.nodes
        n = len(x)
        self.lower = np.zeros(n)   # coefficient of u_{i-1} in row i
        self.diag = np.zeros(n)
        self.upper = np.zeros(n)   # coefficient of u_{i+1} in row i
        wl, wc, wr = grid_mod.laplacian_stencil(x)
        self.lower[1:-1], self.diag[1:-1], self.upper[1:-1] = wl, wc, wr
        h0 = x[1] - x[0]
        # ghost node mirror: u_xx(x_0) = 2 (u_1 - u_0) / h0^2
        self.diag[0] = -2.0 / h0**2
        self.upper[0] = 2.0 / h0**2
        # last row stays zero: Dirichlet node is held fixed

    def apply(self, u):
        out = self.diag * u
        out[:-1] += self.upper[:-1] * u[1:]
        out[1:] += self.lower[1:] * u[:-1]
        return out

    def step(self, u: np.ndarray, dt: float) -> np.ndarray:
        # increment form (I - dt/2 L) d = dt L u keeps round-off off flat regions
        half = 0.5 * dt
        rhs = dt * self.apply(u)
        n = len(u)
        ab = np.empty((3, n))
        ab[0, 0] = 0.0
        ab[0, 1:] = -half * self.upper[:-1]
        ab[1] = 1.0 - half * self.diag
        ab[2, :-1] = -half * self.lower[1:]
        ab[2, -1] = 0.0
        return u + solve_banded((1, 1), ab, rhs, overwrite_ab=True, overwrite_b=True, check_finite=False)


def strang_step(u: np.ndarray, dt: float, nl: Nonlinearity, diffusion: _Diffusion,
                right_value: float | None) -> np.ndarray:
    v = _rk4(nl, u, 0.5 * dt)
    v = diffusion.step(v, dt)
    v = _rk4(nl, v, 0.5 * dt)
    if right_value is not None:
        v[-1] = right_value
    _project_roundoff(v)
    return v


def _project_roundoff(v: np.ndarray):
    over = (v > 1.0) & (v <= 1.0 + ROUNDOFF_PROJECTION)
    under = (v < 0.0) & (v >= -ROUNDOFF_PROJECTION)
    v[over] = 1.0
    v[under] = 0.0


def check_invariants(state: CauchyState, monotone: bool = True):
    u = state.u
    lo = int(np.argmin(u))
    hi = int(np.argmax(u))
    if state.t > 0 and (u[lo] < -RANGE_TOL or u[hi] > 1.0 + RANGE_TOL):
        i = lo if u[lo] < -RANGE_TOL else hi
        raise InvariantViolation(
            f"range violated at t={state.t:.6g}, node {i}, x={state.grid.nodes[i]:.6g}: u={u[i]!r}",
            t=state.t, node=i, x=float(state.grid.nodes[i]), value=float(u[i]))
    if monotone:
        d = np.diff(u)
        j = int(np.argmax(d))
        if d[j] > MONOTONE_TOL:
            raise InvariantViolation(
                f"monotonicity violated at t={state.t:.6g}, node {j + 1}, x={state.grid.nodes[j + 1]:.6g}: "
                f"increase {d[j]:.3e}", t=state.t, node=j + 1, x=float(state.grid.nodes[j + 1]),
                value=float(d[j]))


def initial_state(p: InitialProfile, nl: Nonlinearity, g: Grid) -> CauchyState:
    u = u0_eval(p, g.nodes, 0)
    return CauchyState(t=0.0, grid=g, u=u, right_farfield=float(u[-1]))


class Stepper:
    """Advances a state; caches the diffusion operator per grid."""

    def __init__(self, nl: Nonlinearity, cfg: SolverConfig, right_bc: Callable[[float, float], float] | None):
        self.nl = nl
        self.cfg = cfg
        self.right_bc = right_bc
        self._nodes = None
        self._diff = None

    def _op(self, g: Grid) -> _Diffusion:
        if g.nodes is not self._nodes:
            self._diff = _Diffusion(g)
            self._nodes = g.nodes
        return self._diff

    def _bc(self, g: Grid, t: float):
        if self.right_bc is None:
            return None
        return self.right_bc(t, g.x_right)

    def advance(self, state: CauchyState, dt: float) -> np.ndarray:
        return strang_step(state.u, dt, self.nl, self._op(state.grid), self._bc(state.grid, state.t + dt))

    def step(self, state: CauchyState, dt_cap: float) -> tuple[CauchyState, float]:
        """One accepted step no longer than ``dt_cap``; returns (new state, suggested next dt)."""
        cfg = self.cfg
        st = state.stats
        if cfg.dt is not None:
            dt = min(cfg.dt, dt_cap)
            u_new = self.advance(state, dt)
            nxt = cfg.dt
        else:
            dt = min(st.dt_history[-1] if st.dt_history else cfg.dt_init, dt_cap)
            dt = max(dt, min(cfg.dt_min, dt_cap))
            op = self._op(state.grid)
            while True:
                full = strang_step(state.u, dt, self.nl, op, self._bc(state.grid, state.t + dt))
                half = strang_step(state.u, 0.5 * dt, self.nl, op, self._bc(state.grid, state.t + 0.5 * dt))
                half = strang_step(half, 0.5 * dt, self.nl, op, self._bc(state.grid, state.t + dt))
                err = float(np.max(np.abs(full - half)))
                fac = 0.9 * (cfg.tol / err) ** (1.0 / 3.0) if err > 0 else 2.0
                if err <= cfg.tol or dt <= cfg.dt_min:
                    u_new = half
                    nxt = min(dt * min(max(fac, 0.3), 2.0), cfg.dt_max)
                    break
                st.rejected += 1
                dt = max(dt * min(max(fac, 0.1), 0.9), cfg.dt_min)
        new = CauchyState(t=state.t + dt, grid=state.grid, u=u_new,
                          right_farfield=float(u_new[-1]), stats=st)
        st.steps += 1
        # dt_history keeps the controller's proposal so capped steps don't shrink it
        st.dt_history.append(nxt if cfg.dt is None else dt)
        check_invariants(new, cfg.check_monotone)
        return new, nxt


def step(state: CauchyState, cfg: SolverConfig, nl: Nonlinearity,
         right_bc: Callable[[float, float], float] | None = None, dt: float | None = None) -> CauchyState:
    """Advance ``state`` by one step (``dt`` or the configured/adaptive step)."""
    stepper = Stepper(nl, cfg, right_bc)
    cap = dt if dt is not None else (cfg.dt if cfg.dt is not None else cfg.dt_max)
    if dt is not None and cfg.dt is None:
        # an explicit dt overrides adaptivity for this call
        u_new = stepper.advance(state, dt)
        new = CauchyState(t=state.t + dt, grid=state.grid, u=u_new, right_farfield=float(u_new[-1]),
                          stats=state.stats)
        new.stats.steps += 1
        new.stats.dt_history.append(dt)
        check_invariants(new, cfg.check_monotone)
        return new
    return stepper.step(state, cap)[0]


# ---------------------------------------------------------------------------
# runs


@dataclass
class RunRecord:
    times: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    trajectories: dict = field(default_factory=dict)
    expansions: list = field(default_factory=list)
    final_state: CauchyState | None = None
    error: str | None = None
    diagnostic: dict | None = None
    steps: int = 0
    rejected: int = 0
    snapshots: list = field(default_factory=list)

    @property
    def n_observations(self) -> int:
        return len(self.times)


def _observe(record: RunRecord, state: CauchyState, levels, observers, keep_snapshots=False):
    record.times.append(state.t)
    if keep_snapshots:
        record.snapshots.append((state.t, state.grid.nodes.copy(), state.u.copy()))
    row = {"t": state.t}
    for lam in levels:
        record.trajectories[lam].append(state.t, crossings(state.grid.nodes, state.u, lam))
    for obs in observers:
        out = obs(state)
        if out:
            row.update(out)
    record.rows.append(row)


def _needs_expansion(state: CauchyState, lam_min: float, margin: float):
    u = state.u
    if u[-1] >= lam_min:
        return True, math.inf
    c = crossings(state.grid.nodes, u, lam_min)
    if c is None:
        return False, math.nan
    pos = c[1]
    g = state.grid
    x0 = g.left_anchor if g.kind == "log_stretched" else g.x_left
    # margin measured from the grid origin so it is scale-free on log grids
    return pos - x0 > (1.0 - margin) * (g.x_right - x0), pos


def _expand(state: CauchyState, p, nl, cfg: SolverConfig, pos: float) -> CauchyState:
    g = state.grid
    x0 = g.left_anchor if g.kind == "log_stretched" else g.x_left
    span = g.x_right - x0
    target = x0 + max(cfg.expansion_factor * span, (pos - x0) / (1.0 - cfg.expansion_margin) * 1.05
                      if math.isfinite(pos) else cfg.expansion_factor * span)
    t = state.t
    new_g, new_u, info = grid_mod.expand_right(g, state.u, target,
                                               lambda xs: right_boundary_value(p, nl, t, xs))
    info["t"] = t
    state.stats.expansions.append(info)
    log.debug("expanded grid at t=%.4g: %s", t, info)
    return CauchyState(t=t, grid=new_g, u=new_u, right_farfield=float(new_u[-1]), stats=state.stats)


def run(p: InitialProfile, nl: Nonlinearity, cfg: SolverConfig, t_end: float, observers=(),
        levels=(0.5,), grid: Grid | GridSpec | None = None, raise_on_error: bool = True,
        keep_snapshots: bool = False) -> RunRecord:
    """Integrate from 0 to ``t_end`` observing every ``cfg.obs_dt``.

    ``observers`` are callables ``state -> dict`` whose fields are merged into
    the observation row.  Level sets of ``levels`` are always tracked; the
    smallest level drives right-expansion of the grid.  With
    ``keep_snapshots`` every observed ``(t, nodes, u)`` is stored.
    """
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    levels = tuple(float(l) for l in levels)
    for lam in levels:
        if not 0 < lam < 1:
            raise ValueError(f"level {lam} outside (0, 1)")
    if grid is None:
        grid = GridSpec()
    g = grid.build(p) if isinstance(grid, GridSpec) else grid
    state = initial_state(p, nl, g)
    record = RunRecord(trajectories={lam: LevelSetTrajectory(lam) for lam in levels})
    stepper = Stepper(nl, cfg, lambda t, x: right_boundary_value(p, nl, t, x))
    lam_min = min(levels) if levels else None

    n_obs = int(math.floor(t_end / cfg.obs_dt + 1e-9))
    obs_times = [k * cfg.obs_dt for k in range(1, n_obs + 1)]
    if t_end > 0 and (not obs_times or obs_times[-1] < t_end - 1e-9 * max(1, t_end)):
        obs_times.append(t_end)

    try:
        if lam_min is not None:
            expand, pos = _needs_expansion(state, lam_min, cfg.expansion_margin)
            while expand:
                state = _expand(state, p, nl, cfg, pos)
                expand, pos = _needs_expansion(state, lam_min, cfg.expansion_margin)
        _observe(record, state, levels, observers, keep_snapshots)
        for t_obs in obs_times:
            while state.t < t_obs - 1e-12 * max(1.0, t_obs):
                if state.stats.steps >= cfg.max_steps:
                    raise RuntimeError(f"step budget {cfg.max_steps} exhausted at t={state.t}")
                state, _ = stepper.step(state, t_obs - state.t)
                if lam_min is not None:
                    expand, pos = _needs_expansion(state, lam_min, cfg.expansion_margin)
                    while expand:
                        state = _expand(state, p, nl, cfg, pos)
                        expand, pos = _needs_expansion(state, lam_min, cfg.expansion_margin)
            state.t = t_obs
            _observe(record, state, levels, observers, keep_snapshots)
    except (InvariantViolation, RuntimeError, FloatingPointError) as exc:
        record.error = str(exc)
        record.diagnostic = getattr(exc, "diagnostic", None)
        record.final_state = state
        record.expansions = list(state.stats.expansions)
        record.steps, record.rejected = state.stats.steps, state.stats.rejected
        if raise_on_error:
            raise RunFailed(str(exc), record) from exc
        return record
    record.final_state = state
    record.expansions = list(state.stats.expansions)
    record.steps, record.rejected = state.stats.steps, state.stats.rejected
    return record


# ---------------------------------------------------------------------------
# convergence studies


def heat_oracle_error(h: float, dt: float | None, t_end: float = 1.0, half_width: float = 20.0,
                      tol: float = 1e-9):
    """Max error of the f=0 solver against the Gaussian heat solution at ``t_end``."""
    from .nonlinearity import make_zero

    def exact(t, x):
        return 0.5 / np.sqrt(1.0 + t) * np.exp(-np.asarray(x) ** 2 / (4.0 * (1.0 + t)))

    n = int(round(2 * half_width / h))
    g = grid_mod.build("uniform", -half_width, half_width, n)
    cfg = SolverConfig(dt=dt, tol=tol, obs_dt=t_end, check_monotone=False)
    state = CauchyState(t=0.0, grid=g, u=exact(0.0, g.nodes), right_farfield=float(exact(0.0, half_width)))
    stepper = Stepper(make_zero(), cfg, lambda t, x: float(exact(t, x)))
    while state.t < t_end - 1e-12:
        state, _ = stepper.step(state, t_end - state.t)
    return float(np.max(np.abs(state.u - exact(t_end, g.nodes))))


def logistic_oracle_error(dt: float, u_const: float = 0.3, t_end: float = 5.0, r: float = 1.0):
    """Max error of a spatially uniform run against the logistic closed form at ``t_end``."""
    from .nonlinearity import make_logistic

    nl = make_logistic(r)
    g = grid_mod.build("uniform", 0.0, 10.0, 40)
    # boundary node uses the exact flow, the interior RK4: tiny steps across x_N are expected
    cfg = SolverConfig(dt=dt, obs_dt=max(dt, t_end), check_monotone=False)
    state = CauchyState(t=0.0, grid=g, u=np.full(41, u_const), right_farfield=u_const)
    stepper = Stepper(nl, cfg, lambda t, x: float(nl.flow(u_const, t)))
    while state.t < t_end - 1e-12:
        state, _ = stepper.step(state, t_end - state.t)
    return float(np.max(np.abs(state.u - nl.flow(u_const, t_end))))


def _strang_solution(p, nl, g: Grid, dt: float, t_end: float):
    cfg = SolverConfig(dt=dt, obs_dt=max(dt, t_end))
    state = initial_state(p, nl, g)
    stepper = Stepper(nl, cfg, lambda t, x: right_boundary_value(p, nl, t, x))
    while state.t < t_end - 1e-12:
        state, _ = stepper.step(state, t_end - state.t)
    return state.u


def convergence_order(problem: str, base: float | None = None) -> dict:
    """Observed order from a halving triplet.

    ``problem`` is one of

    * ``"heat_space"`` - f = 0, Gaussian data, error against the heat kernel
      for h, h/2, h/4 (small fixed dt);
    * ``"reaction_time"`` - logistic reaction on a uniform state against the
      closed form for dt, dt/2, dt/4;
    * ``"strang_time"`` - full problem with an algebraic-tail profile,
      self-convergence over dt, dt/2, dt/4.
    """
    if problem == "heat_space":
        h = base or 0.4
        errs = [heat_oracle_error(h / 2**k, dt=2e-3) for k in range(3)]
    elif problem == "reaction_time":
        dt = base or 0.5
        errs = [logistic_oracle_error(dt / 2**k) for k in range(3)]
    elif problem == "strang_time":
        from .nonlinearity import make_logistic
        from .profiles import make_profile

        dt = base or 0.05
        nl = make_logistic(1.0)
        p = make_profile("algebraic", {"alpha": 2.0})
        g = GridSpec(x_right=200.0, h0=0.1).build(p)
        sols = [_strang_solution(p, nl, g, dt / 2**k, 2.0) for k in range(3)]
        errs = [float(np.max(np.abs(sols[0] - sols[1]))), float(np.max(np.abs(sols[1] - sols[2])))]
        order = math.log2(errs[0] / errs[1])
        return {"problem": problem, "errors": errs, "orders": [order], "order": order}
    else:
        raise ValueError(f"unknown convergence problem {problem!r}")
    orders = [math.log2(errs[k] / errs[k + 1]) for k in range(len(errs) - 1)]
    return {"problem": problem, "errors": errs, "orders": orders, "order": orders[-1]}
