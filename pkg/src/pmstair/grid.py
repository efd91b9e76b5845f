"""Uniform grids, piecewise-constant grid functions, and blow-up rescaling.

A grid of width ``delta`` covers the requested interval ``(a, b)`` after
snapping the endpoints outward to the lattice ``delta * Z``.  Grid functions
are constant on each cell ``[a_star + z*delta, a_star + (z+1)*delta)``; the
value at the right endpoint of the domain is the value of the last cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Relative tolerance used when checking that a point sits on a grid node.
NODE_ALIGN_RTOL = 1e-9

#: Hard cap on the number of cells a single grid may hold.
MAX_CELLS = 10**9


@dataclass(frozen=True)
class Grid:
    """Uniform one-dimensional grid with outward-snapped endpoints."""

    a: float
    b: float
    delta: float
    a_star: float
    b_star: float
    ncells: int

    def node(self, z: int) -> float:
        """Position of node ``z`` counted from the snapped left endpoint."""
        return self.a_star + z * self.delta

    def nodes(self) -> np.ndarray:
        """All ``ncells + 1`` node positions."""
        return self.a_star + np.arange(self.ncells + 1) * self.delta

    def cell_midpoints(self) -> np.ndarray:
        return self.a_star + (np.arange(self.ncells) + 0.5) * self.delta

    def index_of_node(self, x: float) -> int:
        """Index of the node at position ``x``; raises if off-lattice."""
        t = (x - self.a_star) / self.delta
        z = round(t)
        if abs(t - z) > NODE_ALIGN_RTOL:
            raise ValueError(f"point {x!r} is not a node of the grid (delta={self.delta!r})")
        if z < 0 or z > self.ncells:
            raise ValueError(f"node {x!r} lies outside [{self.a_star!r}, {self.b_star!r}]")
        return int(z)


@dataclass(frozen=True)
class PCFn:
    """Piecewise-constant function on a :class:`Grid` (one value per cell)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size != self.grid.ncells:
            raise ValueError(f"expected {self.grid.ncells} cell values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("cell values must be finite")
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def __call__(self, x) -> np.ndarray:
        """Evaluate at ``x``; the right endpoint takes the last cell's value."""
        x = np.asarray(x, dtype=float)
        z = np.floor((x - self.grid.a_star) / self.grid.delta).astype(int)
        z = np.clip(z, 0, self.grid.ncells - 1)
        return self.values[z]

    def value_at_node(self, z: int) -> float:
        """Value on the cell starting at node ``z`` (node ``ncells`` maps back)."""
        if z == self.grid.ncells:
            z -= 1
        return float(self.values[z])


@dataclass(frozen=True)
class ScalePair:
    """Blow-up scale ``omega`` and microscopic cell width ``delta_n`` for a given n."""

    n: int
    omega: float
    delta_n: float


def make_grid(a: float, b: float, delta: float) -> Grid:
    """Build the grid of width ``delta`` whose snapped endpoints cover ``(a, b)``.

    The left endpoint snaps down to ``delta*floor(a/delta)`` and the right one
    up to ``delta*ceil(b/delta)``.
    """
    for name, v in (("a", a), ("b", b), ("delta", delta)):
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")
    if not a < b:
        raise ValueError(f"need a < b, got a={a!r}, b={b!r}")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta!r}")
    if (b - a) / delta > MAX_CELLS:
        raise ValueError(f"grid would exceed {MAX_CELLS} cells")
    lo = math.floor(a / delta)
    hi = math.ceil(b / delta)
    # Snapping a float that already sits on a node must not move it.
    if abs(a / delta - round(a / delta)) <= NODE_ALIGN_RTOL:
        lo = round(a / delta)
    if abs(b / delta - round(b / delta)) <= NODE_ALIGN_RTOL:
        hi = round(b / delta)
    ncells = int(hi - lo)
    return Grid(a=a, b=b, delta=delta, a_star=lo * delta, b_star=hi * delta, ncells=ncells)


def grid_from_lattice(a_star: float, delta: float, ncells: int) -> Grid:
    """Grid taken verbatim from a lattice origin, with no endpoint snapping.

    Used where a grid is derived from another one (blow-ups) and the lattice
    must be inherited exactly instead of recomputed through floor/ceil.
    """
    if ncells < 1:
        raise ValueError("grid needs at least one cell")
    b_star = a_star + ncells * delta
    return Grid(a=a_star, b=b_star, delta=delta, a_star=a_star, b_star=b_star, ncells=ncells)


def scales(n: int) -> ScalePair:
    """Return ``omega(n) = (log n / n)^(1/3)`` and ``delta_n = 1/(n*omega(n))``."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    omega = (math.log(n) / n) ** (1.0 / 3.0)
    return ScalePair(n=n, omega=omega, delta_n=1.0 / (n * omega))


def discrete_derivative(u: PCFn) -> PCFn:
    """Forward difference quotient, one cell shorter than the input."""
    g = u.grid
    if g.ncells < 2:
        raise ValueError("discrete derivative needs at least two cells")
    dv = np.diff(u.values) / g.delta
    return PCFn(grid_from_lattice(g.a_star, g.delta, g.ncells - 1), dv)


def total_variation(u: PCFn) -> float:
    """Sum of absolute cell-to-cell increments (0 for a single cell)."""
    if u.grid.ncells < 2:
        return 0.0
    return float(np.sum(np.abs(np.diff(u.values))))


def blow_up(u: PCFn, center: float, omega: float, shift: float) -> PCFn:
    """Zoom ``u`` around a grid node: ``y -> (u(center + omega*y) - shift)/omega``.

    The result lives on the grid of width ``delta/omega`` that inherits the
    source lattice exactly, covering ``(-(center-a)/omega, (b-center)/omega)``.
    With ``shift = f(center)`` this is the forcing-anchored blow-up, with
    ``shift = u(center)`` the self-anchored one.
    """
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega!r}")
    g = u.grid
    k = g.index_of_node(center)  # raises if center is off-lattice
    if g.ncells < 1:
        raise ValueError("blow-up of an empty function")
    new_delta = g.delta / omega
    new_a_star = -k * new_delta
    vals = (u.values - shift) / omega
    return PCFn(grid_from_lattice(new_a_star, new_delta, g.ncells), vals)
