"""Level-set extraction from nodal solutions and growth-law fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

LAWS = ("linear", "t_log_t", "power", "exponential", "double_exponential")


def extract_crossings(state, lam: float):
    """Extreme crossings of level ``lam`` in a solver state (see :func:`crossings`)."""
    return crossings(state.grid.nodes, state.u, lam)


def crossings(x: np.ndarray, u: np.ndarray, lam: float):
    """Extreme positions where ``u = lam`` (linear interpolation between nodes).

    Returns ``(x_min, x_max)`` or ``None`` when ``u - lam`` has no sign change.
    A node where ``u`` equals ``lam`` exactly counts as a crossing at that node.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {lam}")
    x = np.asarray(x, dtype=float)
    d = np.asarray(u, dtype=float) - lam
    exact = np.nonzero(d == 0.0)[0]
    sign_change = np.nonzero(d[:-1] * d[1:] < 0.0)[0]
    if exact.size == 0 and sign_change.size == 0:
        return None
    pos = []
    if sign_change.size:
        i = sign_change
        w = d[i] / (d[i] - d[i + 1])
        pos.append(x[i] + w * (x[i + 1] - x[i]))
    if exact.size:
        pos.append(x[exact])
    pos = np.concatenate(pos)
    return float(pos.min()), float(pos.max())


@dataclass
class LevelSetTrajectory:
    lam: float
    t: list = field(default_factory=list)
    x_min: list = field(default_factory=list)
    x_max: list = field(default_factory=list)
    empty: list = field(default_factory=list)

    def append(self, t: float, crossing):
        self.t.append(float(t))
        if crossing is None:
            self.x_min.append(math.nan)
            self.x_max.append(math.nan)
            self.empty.append(True)
        else:
            self.x_min.append(crossing[0])
            self.x_max.append(crossing[1])
            self.empty.append(False)

    @property
    def t_first_nonempty(self) -> float:
        for t, e in zip(self.t, self.empty):
            if not e:
                return t
        return math.inf

    def arrays(self):
        return (np.asarray(self.t), np.asarray(self.x_min), np.asarray(self.x_max),
                np.asarray(self.empty, dtype=bool))

    def window(self, t_a: float, t_b: float):
        """Non-empty samples with ``t_a <= t <= t_b`` (small slack on the ends)."""
        t, xmin, xmax, empty = self.arrays()
        tol = 1e-9 * max(1.0, abs(t_b))
        sel = (~empty) & (t >= t_a - tol) & (t <= t_b + tol)
        return t[sel], xmin[sel], xmax[sel]

    def at(self, time: float):
        t, xmin, xmax, empty = self.arrays()
        i = int(np.argmin(np.abs(t - time)))
        if abs(t[i] - time) > 1e-9 * max(1.0, abs(time)) or empty[i]:
            raise ValueError(f"no non-empty sample at t={time} for level {self.lam}")
        return float(xmin[i]), float(xmax[i])

    def rows(self):
        for t, a, b, e in zip(self.t, self.x_min, self.x_max, self.empty):
            yield {"t": t, "lambda": self.lam, "x_min": a, "x_max": b, "empty": int(e)}

    @classmethod
    def from_rows(cls, lam: float, rows) -> "LevelSetTrajectory":
        traj = cls(lam=float(lam))
        for r in rows:
            e = bool(int(r["empty"]))
            traj.append(float(r["t"]), None if e else (float(r["x_min"]), float(r["x_max"])))
        return traj

    @classmethod
    def from_function(cls, lam: float, times, x_of_t) -> "LevelSetTrajectory":
        traj = cls(lam=float(lam))
        for t in times:
            x = float(x_of_t(t))
            traj.append(t, (x, x))
        return traj


def average_speed(traj: LevelSetTrajectory, t1: float, t2: float) -> float:
    if not t2 > t1:
        raise ValueError("need t2 > t1")
    x1 = traj.at(t1)[0]
    x2 = traj.at(t2)[0]
    return (x2 - x1) / (t2 - t1)


@dataclass
class GrowthFit:
    law: str
    window: tuple
    params: dict
    r2: float
    n: int

    def to_dict(self) -> dict:
        return {"law": self.law, "window": list(self.window), "params": self.params, "r2": self.r2, "n": self.n}


def _ols(X, Y):
    slope, intercept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + intercept)
    ss_tot = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_growth_law(traj: LevelSetTrajectory, law: str, window, use: str = "x_min") -> GrowthFit:
    """Least squares in the coordinates where ``law`` is a straight line.

    ========================= ===================== ============================
    law                       regression            params
    ========================= ===================== ============================
    linear                    x ~ t                 speed, intercept
    t_log_t                   x ~ t ln t            slope, intercept
    power                     ln x ~ ln t           exponent, prefactor
    exponential               ln x ~ t              rate, intercept
    double_exponential        ln ln x ~ t           rate, intercept
    ========================= ===================== ============================
    """
    if law not in LAWS:
        raise ValueError(f"unknown law {law!r}; known: {LAWS}")
    t_a, t_b = float(window[0]), float(window[1])
    t, xmin, xmax = traj.window(t_a, t_b)
    x = xmin if use == "x_min" else xmax
    if len(t) < 10:
        raise ValueError(f"need at least 10 samples in window [{t_a}, {t_b}], have {len(t)}")
    if law in ("power", "exponential", "double_exponential", "t_log_t") and np.any(x <= 1.0):
        raise ValueError(f"{law} fit needs positions > 1")
    if law == "double_exponential" and np.any(x <= math.e):
        raise ValueError("double_exponential fit needs positions > e")
    if law in ("power", "t_log_t") and np.any(t <= 0):
        raise ValueError(f"{law} fit needs t > 0")

    if law == "linear":
        s, c, r2 = _ols(t, x)
        params = {"speed": s, "intercept": c}
    elif law == "t_log_t":
        s, c, r2 = _ols(t * np.log(t), x)
        params = {"slope": s, "intercept": c}
    elif law == "power":
        s, c, r2 = _ols(np.log(t), np.log(x))
        params = {"exponent": s, "prefactor": math.exp(c)}
    elif law == "exponential":
        s, c, r2 = _ols(t, np.log(x))
        params = {"rate": s, "intercept": c}
    else:
        s, c, r2 = _ols(t, np.log(np.log(x)))
        params = {"rate": s, "intercept": c}
    return GrowthFit(law=law, window=(t_a, t_b), params=params, r2=r2, n=len(t))


def predicted_growth(family: str, params: dict, fprime0: float) -> dict:
    """Leading-order growth law of the level sets for each tail family."""
    a = params.get("alpha")
    if family == "tlnt":
        return {"law": "t_log_t", "slope": fprime0 / a}
    if family == "stretched_exp":
        b = params.get("beta", 1.0)
        return {"law": "power", "exponent": 1.0 / a, "prefactor": (fprime0 / b) ** (1.0 / a)}
    if family == "algebraic":
        return {"law": "exponential", "rate": fprime0 / a}
    if family == "log_power":
        return {"law": "double_exponential", "rate": fprime0 / a}
    if family == "exponential":
        c_star = 2.0 * math.sqrt(fprime0)
        speed = a + fprime0 / a if a < math.sqrt(fprime0) else c_star
        return {"law": "linear", "speed": speed}
    if family == "target_curve":
        return {"law": "lower_bound", "curve": params.get("curve"), "coef": params.get("coef")}
    raise ValueError(f"no prediction for family {family!r}")


def transition_width(high: LevelSetTrajectory, low: LevelSetTrajectory):
    """Distance ``x_min(low level) - x_max(high level)`` at common non-empty samples.

    Returns ``(t, width)``.  A bounded-width transition would keep this
    bounded; accelerating solutions widen.
    """
    if not low.lam < high.lam:
        raise ValueError("low level must be below high level")
    th, _, xh, eh = high.arrays()
    tl, xl, _, el = low.arrays()
    common = {round(t, 12): i for i, t in enumerate(tl) if not el[i]}
    t_out, w_out = [], []
    for j, t in enumerate(th):
        i = common.get(round(t, 12))
        if i is not None and not eh[j]:
            t_out.append(t)
            w_out.append(xl[i] - xh[j])
    return np.asarray(t_out), np.asarray(w_out)
