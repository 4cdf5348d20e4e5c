"""Nonuniform 1-D grids that can grow to the right.

``log_stretched`` grids are uniform in a computational coordinate ``xi``::

    x(xi) = anchor + xi / sigma                for xi < 0
    x(xi) = anchor + (exp(xi) - 1) / sigma     for xi >= 0

so spacing is constant left of the anchor and grows geometrically (ratio
``exp(dxi)``) to the right of it.  The map is C^1 at the anchor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

MIN_INTERVALS = 32
MAX_RATIO = 1.05
DEFAULT_SIGMA = 0.02
DEFAULT_BUDGET = 200_000


@dataclass(frozen=True)
class Grid:
    nodes: np.ndarray
    kind: str = "uniform"
    left_anchor: float = 0.0
    sigma: float = 0.0
    dxi: float = 0.0
    xi_right: float = 0.0
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        x = self.nodes
        if x.ndim != 1 or len(x) < MIN_INTERVALS + 1:
            raise ValueError(f"grid needs at least {MIN_INTERVALS + 1} nodes")
        if np.any(np.diff(x) <= 0):
            raise ValueError("grid nodes must be strictly increasing")

    @property
    def n(self) -> int:
        """Number of intervals N (nodes are x_0..x_N)."""
        return len(self.nodes) - 1

    @property
    def x_left(self) -> float:
        return float(self.nodes[0])

    @property
    def x_right(self) -> float:
        return float(self.nodes[-1])

    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    def describe(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma, "left_anchor": self.left_anchor,
                "dxi": self.dxi, "budget": self.budget, "x_left": self.x_left,
                "x_right": self.x_right, "n_nodes": len(self.nodes)}


def _xi_to_x(xi, anchor, sigma):
    xi = np.asarray(xi, dtype=float)
    return np.where(xi < 0.0, anchor + xi / sigma, anchor + np.expm1(np.maximum(xi, 0.0)) / sigma)


def _x_to_xi(x, anchor, sigma):
    d = float(x) - anchor
    return d * sigma if d < 0 else math.log1p(sigma * d)


def build(kind: str, x_left: float, x_right: float, n: int, stretch: float = DEFAULT_SIGMA,
          left_anchor: float | None = None, budget: int = DEFAULT_BUDGET) -> Grid:
    """Grid with exactly ``n + 1`` nodes and exact endpoints.

    ``stretch`` is the rate sigma of a ``log_stretched`` grid; ``left_anchor``
    (default ``x_left``) is where stretching starts.
    """
    if not x_left < x_right:
        raise ValueError(f"degenerate interval [{x_left}, {x_right}]")
    if n < MIN_INTERVALS:
        raise ValueError(f"need n >= {MIN_INTERVALS}, got {n}")
    if kind == "uniform":
        nodes = np.linspace(x_left, x_right, n + 1)
        h = (x_right - x_left) / n
        return Grid(nodes=nodes, kind="uniform", left_anchor=x_left, dxi=h, xi_right=x_right, budget=budget)
    if kind != "log_stretched":
        raise ValueError(f"unknown grid kind {kind!r}")
    if not stretch > 0:
        raise ValueError("stretch rate must be positive")
    anchor = x_left if left_anchor is None else float(left_anchor)
    if not x_left <= anchor < x_right:
        raise ValueError("left_anchor must lie in [x_left, x_right)")
    xi_l = _x_to_xi(x_left, anchor, stretch)
    xi_r = _x_to_xi(x_right, anchor, stretch)
    xi = np.linspace(xi_l, xi_r, n + 1)
    nodes = _xi_to_x(xi, anchor, stretch)
    nodes[0], nodes[-1] = x_left, x_right
    dxi = (xi_r - xi_l) / n
    if math.exp(dxi) > MAX_RATIO:
        raise ValueError(f"spacing ratio exp(dxi) = {math.exp(dxi):.4f} exceeds {MAX_RATIO}; increase n")
    return Grid(nodes=nodes, kind="log_stretched", left_anchor=anchor, sigma=float(stretch),
                dxi=dxi, xi_right=xi_r, budget=budget)


def laplacian_weights(g: Grid, i: int):
    """Three-point weights for u_xx at interior node ``i`` (exact on quadratics)."""
    if not 1 <= i <= g.n - 1:
        raise IndexError(f"node {i} is not interior")
    hm = g.nodes[i] - g.nodes[i - 1]
    hp = g.nodes[i + 1] - g.nodes[i]
    return 2.0 / (hm * (hm + hp)), -2.0 / (hm * hp), 2.0 / (hp * (hm + hp))


def laplacian_stencil(nodes: np.ndarray):
    """Vectorized weights for every interior node: arrays (w_left, w_center, w_right)."""
    h = np.diff(nodes)
    hm, hp = h[:-1], h[1:]
    return 2.0 / (hm * (hm + hp)), -2.0 / (hm * hp), 2.0 / (hp * (hm + hp))


def first_derivative(nodes: np.ndarray, u: np.ndarray, left_neumann: bool = True) -> np.ndarray:
    """Second-order nodal u_x on a nonuniform grid; one-sided at the right end."""
    h = np.diff(nodes)
    hm, hp = h[:-1], h[1:]
    du = np.empty_like(u)
    du[1:-1] = (-hp / (hm * (hm + hp))) * u[:-2] + ((hp - hm) / (hm * hp)) * u[1:-1] \
        + (hm / (hp * (hm + hp))) * u[2:]
    if left_neumann:
        du[0] = 0.0
    else:
        a, b = h[0], h[1]
        du[0] = (-(2 * a + b) / (a * (a + b))) * u[0] + ((a + b) / (a * b)) * u[1] - (a / (b * (a + b))) * u[2]
    a, b = h[-1], h[-2]
    du[-1] = ((2 * a + b) / (a * (a + b))) * u[-1] - ((a + b) / (a * b)) * u[-2] + (a / (b * (a + b))) * u[-3]
    return du


def _extension_nodes(g: Grid, new_right: float):
    if g.kind == "uniform":
        h = g.dxi
        k = int(math.ceil((new_right - g.x_right) / h - 1e-9))
        k = max(k, 1)
        return g.x_right + h * np.arange(1, k + 1), g.x_right + h * k
    xi_target = _x_to_xi(new_right, g.left_anchor, g.sigma)
    k = max(int(math.ceil((xi_target - g.xi_right) / g.dxi - 1e-9)), 1)
    xi_new = g.xi_right + g.dxi * np.arange(1, k + 1)
    return _xi_to_x(xi_new, g.left_anchor, g.sigma), float(xi_new[-1])


def coarsen_left(g: Grid, u: np.ndarray, flat_tol: float = 1e-9):
    """Drop every other node in the leftmost flat region of ``u``.

    The flat region is the longest prefix where ``|u - u[0]| <= flat_tol``.
    Kept values are untouched.  Returns (grid, u, n_dropped).
    """
    flat = np.abs(u - u[0]) <= flat_tol
    m = int(np.argmin(flat)) if not np.all(flat) else len(u)
    # keep the last flat node and the first non-flat one so the stencil stays intact
    m = max(m - 1, 0)
    if m < 4:
        return g, u, 0
    keep = np.ones(len(u), dtype=bool)
    keep[1:m:2] = False
    dropped = int((~keep).sum())
    return replace(g, nodes=g.nodes[keep]), u[keep], dropped


def expand_right(g: Grid, u: np.ndarray, new_right: float, seed: Callable[[np.ndarray], np.ndarray]):
    """Extend the grid past ``new_right`` following its stretching law.

    New nodal values come from ``seed(x_new)``.  Old nodes and values are kept
    bitwise.  If the node budget would be exceeded, the flat left region is
    coarsened first.  Returns (grid, u, info).
    """
    if not new_right > g.x_right:
        raise ValueError(f"new_right={new_right} must exceed x_N={g.x_right}")
    x_new, xi_end = _extension_nodes(g, new_right)
    info = {"old_right": g.x_right, "new_right": float(x_new[-1]), "added": len(x_new), "dropped": 0}
    while len(g.nodes) + len(x_new) > g.budget:
        g, u, dropped = coarsen_left(g, u)
        if dropped == 0:
            raise RuntimeError(f"node budget {g.budget} exhausted and no flat region left to coarsen")
        info["dropped"] += dropped
    nodes = np.concatenate([g.nodes, x_new])
    u_new = np.concatenate([u, np.asarray(seed(x_new), dtype=float)])
    return replace(g, nodes=nodes, xi_right=xi_end), u_new, info
