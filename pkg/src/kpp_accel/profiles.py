"""Front-like, monotone, C^2 initial conditions with slowly decaying tails.

A profile equals ``plateau`` on ``(-inf, x_blend - blend_width]``, equals an
analytic tail ``T`` on ``[x_blend, +inf)`` and is joined in between by

    u0 = plateau + S(s) * (Q(x) - plateau),   s = (x - x_blend + w) / w,

where ``S`` is the quintic smoothstep and ``Q`` the second-order Taylor
polynomial of ``T`` at ``x_blend``.  ``S`` has vanishing first and second
derivatives at both ends, so value, slope and curvature match on each side.

Tail families (all with closed-form inverse):

=============== =============================== ==================
family          tail T(x)                       monotone for
=============== =============================== ==================
exponential     C exp(-alpha x)                 all x
tlnt            C exp(-alpha x / ln x)          x > e
stretched_exp   C exp(-beta x**alpha)           x > 0, 0<alpha<1
algebraic       C x**(-alpha)                   x > 0
log_power       C (ln x)**(-alpha)              x > 1
target_curve    exp(-k g^{-1}(x))               x > g(0)
=============== =============================== ==================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import lambertw

DEFAULT_PLATEAU = 0.9
INVERSE_RTOL = 1e-12


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def _smoothstep_d1(s):
    s = np.clip(s, 0.0, 1.0)
    return 30.0 * s**2 * (1.0 - s) ** 2


def _smoothstep_d2(s):
    s = np.clip(s, 0.0, 1.0)
    return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)


# ---------------------------------------------------------------------------
# analytic tails


class Tail:
    """Analytic tail with derivatives, log-value and inverse.

    Subclasses implement ``log_value``, ``d1_over_value`` and
    ``d2_over_value``; values are reconstructed as ``exp(log_value)`` so that
    very small tails stay accurate in ratios.
    """

    family = ""
    domain_min = -math.inf

    def __init__(self, params: dict):
        self.params = {k: float(v) for k, v in params.items()}

    def log_value(self, x):
        raise NotImplementedError

    def d1_over_value(self, x):
        raise NotImplementedError

    def d2_over_value(self, x):
        raise NotImplementedError

    def inverse(self, level):
        raise NotImplementedError

    def value(self, x):
        return np.exp(self.log_value(x))

    def derivative(self, x, order=0):
        v = self.value(x)
        if order == 0:
            return v
        if order == 1:
            return self.d1_over_value(x) * v
        return self.d2_over_value(x) * v


class ExponentialTail(Tail):
    family = "exponential"

    def __init__(self, params):
        super().__init__({"alpha": params["alpha"], "C": params.get("C", 1.0)})
        self.alpha, self.C = self.params["alpha"], self.params["C"]

    def log_value(self, x):
        return math.log(self.C) - self.alpha * np.asarray(x, dtype=float)

    def d1_over_value(self, x):
        return np.full_like(np.asarray(x, dtype=float), -self.alpha)

    def d2_over_value(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.alpha**2)

    def inverse(self, level):
        return -np.log(np.asarray(level) / self.C) / self.alpha


class TLnTTail(Tail):
    family = "tlnt"
    domain_min = math.e

    def __init__(self, params):
        super().__init__({"alpha": params["alpha"], "C": params.get("C", 1.0)})
        self.alpha, self.C = self.params["alpha"], self.params["C"]

    def log_value(self, x):
        x = np.asarray(x, dtype=float)
        return math.log(self.C) - self.alpha * x / np.log(x)

    def d1_over_value(self, x):
        L = np.log(np.asarray(x, dtype=float))
        return -self.alpha * (1.0 / L - 1.0 / L**2)

    def d2_over_value(self, x):
        x = np.asarray(x, dtype=float)
        L = np.log(x)
        phi1 = 1.0 / L - 1.0 / L**2
        phi2 = (2.0 - L) / (x * L**3)
        return self.alpha**2 * phi1**2 - self.alpha * phi2

    def inverse(self, level):
        # x / ln x = y  <=>  x = -y W_{-1}(-1/y), upper branch x > e
        y = -np.log(np.asarray(level, dtype=float) / self.C) / self.alpha
        if np.any(y <= math.e):
            raise ValueError("level above the monotone part of the t ln t tail")
        x = np.real(-y * lambertw(-1.0 / y, k=-1))
        # one Newton polish on x/ln x = y
        L = np.log(x)
        x = x - (x / L - y) / (1.0 / L - 1.0 / L**2)
        return x


class StretchedExpTail(Tail):
    family = "stretched_exp"
    domain_min = 0.0

    def __init__(self, params):
        super().__init__({"alpha": params["alpha"], "beta": params.get("beta", 1.0), "C": params.get("C", 1.0)})
        self.alpha, self.beta, self.C = self.params["alpha"], self.params["beta"], self.params["C"]
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"stretched_exp needs alpha in (0, 1), got {self.alpha}")

    def log_value(self, x):
        return math.log(self.C) - self.beta * np.asarray(x, dtype=float) ** self.alpha

    def d1_over_value(self, x):
        x = np.asarray(x, dtype=float)
        return -self.beta * self.alpha * x ** (self.alpha - 1.0)

    def d2_over_value(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.alpha, self.beta
        return (b * a * x ** (a - 1.0)) ** 2 - b * a * (a - 1.0) * x ** (a - 2.0)

    def inverse(self, level):
        return (-np.log(np.asarray(level, dtype=float) / self.C) / self.beta) ** (1.0 / self.alpha)


class AlgebraicTail(Tail):
    family = "algebraic"
    domain_min = 0.0

    def __init__(self, params):
        super().__init__({"alpha": params["alpha"], "C": params.get("C", 1.0)})
        self.alpha, self.C = self.params["alpha"], self.params["C"]

    def log_value(self, x):
        return math.log(self.C) - self.alpha * np.log(np.asarray(x, dtype=float))

    def d1_over_value(self, x):
        return -self.alpha / np.asarray(x, dtype=float)

    def d2_over_value(self, x):
        x = np.asarray(x, dtype=float)
        return self.alpha * (self.alpha + 1.0) / x**2

    def inverse(self, level):
        return (self.C / np.asarray(level, dtype=float)) ** (1.0 / self.alpha)


class LogPowerTail(Tail):
    family = "log_power"
    domain_min = 1.0

    def __init__(self, params):
        super().__init__({"alpha": params["alpha"], "C": params.get("C", 1.0)})
        self.alpha, self.C = self.params["alpha"], self.params["C"]

    def log_value(self, x):
        return math.log(self.C) - self.alpha * np.log(np.log(np.asarray(x, dtype=float)))

    def d1_over_value(self, x):
        x = np.asarray(x, dtype=float)
        return -self.alpha / (x * np.log(x))

    def d2_over_value(self, x):
        x = np.asarray(x, dtype=float)
        L = np.log(x)
        return self.alpha * (self.alpha + L + 1.0) / (x**2 * L**2)

    def inverse(self, level):
        with np.errstate(over="ignore"):
            return np.exp((self.C / np.asarray(level, dtype=float)) ** (1.0 / self.alpha))


@dataclass(frozen=True)
class TargetCurve:
    """Increasing curve ``g`` with closed-form inverse; ``g'`` must blow up.

    Built-ins: ``quadratic`` (g = a t^2) and ``exponential`` (g = exp(b t)).
    """

    kind: str
    coef: float = 1.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "exponential"):
            raise ValueError(f"target curve {self.kind!r} not in catalogue (quadratic, exponential)")
        if not self.coef > 0:
            raise ValueError("target curve coefficient must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "quadratic":
            return self.coef * t**2
        return np.exp(self.coef * t)

    def inverse(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return np.sqrt(x / self.coef)
        return np.log(x) / self.coef

    def inverse_d1(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return 0.5 / np.sqrt(self.coef * x)
        return 1.0 / (self.coef * x)

    def inverse_d2(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "quadratic":
            return -0.25 / (math.sqrt(self.coef) * x**1.5)
        return -1.0 / (self.coef * x**2)

    @property
    def at_zero(self) -> float:
        return float(self(0.0))


class TargetCurveTail(Tail):
    family = "target_curve"

    def __init__(self, params):
        super().__init__({"k": params["k"], "coef": params.get("coef", 1.0)})
        self.curve = TargetCurve(str(params["curve"]), self.params["coef"])
        self.params["curve"] = self.curve.kind
        self.k = self.params["k"]
        self.domain_min = self.curve.at_zero

    def log_value(self, x):
        return -self.k * self.curve.inverse(x)

    def d1_over_value(self, x):
        return -self.k * self.curve.inverse_d1(x)

    def d2_over_value(self, x):
        h1 = self.curve.inverse_d1(x)
        return self.k**2 * h1**2 - self.k * self.curve.inverse_d2(x)

    def inverse(self, level):
        return self.curve(-np.log(np.asarray(level, dtype=float)) / self.k)


TAILS = {
    cls.family: cls
    for cls in (ExponentialTail, TLnTTail, StretchedExpTail, AlgebraicTail, LogPowerTail, TargetCurveTail)
}


# ---------------------------------------------------------------------------
# profile


@dataclass(frozen=True)
class InitialProfile:
    family: str
    params: dict
    plateau: float
    x_blend: float
    blend_width: float
    tail: Tail = field(repr=False, compare=False)

    @property
    def x_left_joint(self) -> float:
        return self.x_blend - self.blend_width

    def __call__(self, x, order: int = 0):
        return evaluate(self, x, order)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": dict(self.params),
            "plateau": self.plateau,
            "x_blend": self.x_blend,
            "blend_width": self.blend_width,
        }

    # Taylor data of the tail at x_blend, reused by the blend
    def _taylor(self):
        xb = self.x_blend
        return (float(self.tail.derivative(xb, 0)), float(self.tail.derivative(xb, 1)),
                float(self.tail.derivative(xb, 2)))


def _blend_values(p: InitialProfile, x, order):
    T0, T1, T2 = p._taylor()
    w = p.blend_width
    d = x - p.x_blend
    s = (x - p.x_left_joint) / w
    Q = T0 + T1 * d + 0.5 * T2 * d**2
    Q1 = T1 + T2 * d
    S, S1, S2 = _smoothstep(s), _smoothstep_d1(s), _smoothstep_d2(s)
    if order == 0:
        return p.plateau + S * (Q - p.plateau)
    if order == 1:
        return S1 / w * (Q - p.plateau) + S * Q1
    return S2 / w**2 * (Q - p.plateau) + 2.0 * S1 / w * Q1 + S * T2


def evaluate(p: InitialProfile, x, order: int = 0):
    """``u0``, ``u0'`` or ``u0''`` at ``x`` (scalar or array)."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    xa = np.asarray(x, dtype=float)
    out = np.empty_like(xa)
    plateau = xa <= p.x_left_joint
    tail = xa >= p.x_blend
    blend = ~(plateau | tail)
    out[plateau] = p.plateau if order == 0 else 0.0
    if np.any(tail):
        out[tail] = p.tail.derivative(xa[tail], order)
    if np.any(blend):
        out[blend] = _blend_values(p, xa[blend], order)
    if np.ndim(x) == 0:
        return float(out)
    return out


def log_evaluate(p: InitialProfile, x):
    """``ln u0(x)``, exact in log space on the tail."""
    xa = np.asarray(x, dtype=float)
    out = np.empty_like(xa)
    tail = xa >= p.x_blend
    out[tail] = p.tail.log_value(xa[tail])
    out[~tail] = np.log(evaluate(p, xa[~tail], 0))
    if np.ndim(x) == 0:
        return float(out)
    return out


def _default_x_blend(tail: Tail, plateau: float) -> float:
    lo = tail.domain_min + 0.5 if math.isfinite(tail.domain_min) else -math.inf
    try:
        x = float(tail.inverse(plateau / 4.0))
    except (ValueError, FloatingPointError):
        x = -math.inf
    if not math.isfinite(x):
        x = -math.inf
    x = max(x, lo)
    if not math.isfinite(x):
        x = 0.0
    return x


def _is_monotone_blend(p: InitialProfile, n: int = 4001) -> bool:
    xs = np.linspace(p.x_left_joint, p.x_blend, n)
    d1 = _blend_values(p, xs, 1)
    vals = _blend_values(p, xs, 0)
    return bool(np.all(d1 <= 1e-14) and np.all(vals > 0.0) and np.all(vals <= p.plateau + 1e-15))


def make_profile(family: str, params: dict, plateau: float = DEFAULT_PLATEAU,
                 x_blend: float | None = None, blend_width: float | None = None) -> InitialProfile:
    """Build a front-like profile.

    ``x_blend`` defaults to the point where the tail equals ``plateau/4``
    (kept inside the tail's monotone domain).  ``blend_width`` defaults to the
    widest of 2, 1, 1/2, ... that keeps the blend monotone.
    """
    try:
        tail_cls = TAILS[family]
    except KeyError:
        raise ValueError(f"unknown profile family {family!r}; known: {sorted(TAILS)}") from None
    if not 0.0 < plateau < 1.0:
        raise ValueError(f"plateau must lie in (0, 1), got {plateau}")
    tail = tail_cls(dict(params))
    if x_blend is None:
        x_blend = _default_x_blend(tail, plateau)
    x_blend = float(x_blend)
    if not x_blend > tail.domain_min:
        raise ValueError(f"{family} tail is not defined (or not monotone) at x_blend={x_blend}; "
                         f"need x_blend > {tail.domain_min}")
    t0 = float(tail.value(x_blend))
    if not t0 < plateau:
        raise ValueError(f"tail({x_blend}) = {t0} is not below the plateau {plateau}")
    if float(tail.d1_over_value(x_blend)) >= 0.0:
        raise ValueError(f"{family} tail is not decreasing at x_blend={x_blend}")

    widths = [float(blend_width)] if blend_width is not None else [2.0 / 2**k for k in range(12)]
    for w in widths:
        if not w > 0:
            raise ValueError("blend_width must be positive")
        p = InitialProfile(family=family, params=dict(tail.params), plateau=float(plateau),
                           x_blend=x_blend, blend_width=w, tail=tail)
        if _is_monotone_blend(p):
            return p
    raise ValueError(f"no monotone blend for {family} at x_blend={x_blend} with widths {widths}")


def from_config(spec: dict) -> InitialProfile:
    spec = dict(spec)
    if spec.get("family") == "target_curve" and "x_blend" not in spec:
        params = spec["params"]
        curve = TargetCurve(str(params["curve"]), float(params.get("coef", 1.0)))
        return from_target_curve(curve, float(params["k"]), plateau=float(spec.get("plateau", DEFAULT_PLATEAU)))
    return make_profile(spec["family"], dict(spec.get("params", {})),
                        plateau=float(spec.get("plateau", DEFAULT_PLATEAU)),
                        x_blend=spec.get("x_blend"), blend_width=spec.get("blend_width"))


def from_target_curve(g: TargetCurve, fprime0: float, plateau: float = DEFAULT_PLATEAU,
                      blend_width: float | None = None) -> InitialProfile:
    """Profile with tail ``exp(-fprime0 * g^{-1}(x))`` on ``[g(0) + 1, inf)``.

    Level sets of the resulting solution lie beyond ``g(t/2)`` at large times.
    """
    if not isinstance(g, TargetCurve):
        raise ValueError("target curve must be a TargetCurve from the built-in catalogue")
    params = {"curve": g.kind, "coef": g.coef, "k": float(fprime0)}
    return make_profile("target_curve", params, plateau=plateau, x_blend=g.at_zero + 1.0,
                        blend_width=blend_width)


def _bisect_inverse(p: InitialProfile, level: float) -> float:
    lo = p.x_blend
    hi = max(2.0 * abs(lo), 1.0) + lo
    while p.tail.value(hi) > level:
        hi = lo + 2.0 * (hi - lo)
        if not math.isfinite(hi):
            raise ValueError("level not reached by the tail")
    return brentq(lambda x: float(p.tail.log_value(x)) - math.log(level), lo, hi,
                  xtol=1e-300, rtol=INVERSE_RTOL)


def invert_tail(p: InitialProfile, level):
    """Unique ``x >= x_blend`` with ``u0(x) = level`` (closed form; bisection fallback)."""
    lv = np.asarray(level, dtype=float)
    top = float(p.tail.value(p.x_blend))
    if np.any(lv <= 0.0) or np.any(lv > top * (1.0 + 1e-14)):
        raise ValueError(f"level must lie in (0, u0(x_blend)] = (0, {top}]")
    try:
        x = np.asarray(p.tail.inverse(np.minimum(lv, top)), dtype=float)
    except NotImplementedError:
        x = np.vectorize(lambda v: _bisect_inverse(p, v))(lv)
    x = np.maximum(x, p.x_blend)
    if np.ndim(level) == 0:
        return float(x)
    return x


# ---------------------------------------------------------------------------
# tail hypotheses


@dataclass
class SlowDecayReport:
    eps: list
    passed: dict
    first_monotone_x: dict
    max_log_ratio: dict
    second_derivative_ratio: tuple
    second_derivative_vanishes: bool


def verify_slow_decay(p: InitialProfile, eps_list, x_max: float = 1e100, n: int = 4000) -> SlowDecayReport:
    """Check ``u0(x) e^{eps x} -> inf`` per eps, and ``u0''/u0 -> 0``, on samples.

    The product is evaluated as ``ln u0 + eps x`` to avoid under/overflow.  A
    given eps passes when the sampled log-product is increasing from some
    sample onwards and exceeds ``ln 1e6`` before ``x_max``.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list must be non-empty")
    x0 = max(p.x_blend, 1.0)
    xs = np.geomspace(x0, x_max, n)
    logu = p.tail.log_value(xs)
    passed, first_x, max_lr = {}, {}, {}
    for eps in eps_list:
        phi = logu + eps * xs
        increasing = np.diff(phi) > 0
        # last index where the sequence fails to increase
        bad = np.nonzero(~increasing)[0]
        k = 0 if bad.size == 0 else int(bad[-1]) + 1
        mono_ok = k < len(xs) - 1
        first_x[eps] = float(xs[k]) if mono_ok else math.inf
        max_lr[eps] = float(phi[k:].max()) if mono_ok else float(phi.max())
        passed[eps] = bool(mono_ok and max_lr[eps] > math.log(1e6))
    ratio = np.abs(p.tail.d2_over_value(xs))
    vanishes = bool(ratio[-1] < 1e-2 * max(ratio[0], 1e-300) or ratio[-1] < 1e-6)
    return SlowDecayReport(eps=eps_list, passed=passed, first_monotone_x=first_x, max_log_ratio=max_lr,
                           second_derivative_ratio=(float(ratio[0]), float(ratio[-1])),
                           second_derivative_vanishes=vanishes)


def tail_beta(p: InitialProfile) -> float | None:
    """Exponent beta with ``u0'' = O(u0^{1+beta})`` when the family admits one."""
    if p.family == "algebraic":
        return 2.0 / p.params["alpha"]
    return None


def second_derivative_power_bound(p: InitialProfile, beta: float, x_max: float = 1e12, n: int = 2000):
    """Sample ``|u0''| / u0^{1+beta}`` on the tail; return (bounded, max on far half, max on near half).

    Called bounded when the far-half maximum does not exceed 10x the near-half one.
    """
    xs = np.geomspace(max(p.x_blend, 1.0), x_max, n)
    logu = p.tail.log_value(xs)
    with np.errstate(over="ignore", invalid="ignore"):
        r = np.abs(p.tail.d2_over_value(xs)) * np.exp(-beta * logu)
    near, far = r[: n // 2], r[n // 2:]
    near_max, far_max = float(np.nanmax(near)), float(np.nanmax(far))
    bounded = bool(np.all(np.isfinite(r)) and far_max <= 10.0 * near_max)
    return bounded, far_max, near_max
